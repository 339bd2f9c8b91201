#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace pulse {

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  /// Population standard deviation of the signed errors.
  double sd = 0.0;
  /// Empty when either sequence has zero variance and they differ.
  std::optional<double> pearson_r;
  /// Set whenever r could not be computed from the data.
  bool r_flagged = false;
  int n = 0;

  nlohmann::json to_json() const;
};

/// Errors are pred - truth, in bpm.
Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth);

/// Subject-level partition into k folds whose sizes differ by at most one.
std::vector<std::vector<std::string>> kfold_split(const std::vector<std::string>& subjects, int k,
                                                  std::uint64_t seed);

/// HR in bpm mapped affinely from [42, 180] onto [0, 1] and back.
double scale_hr(double bpm);
double unscale_hr(double scaled);

}  // namespace pulse
