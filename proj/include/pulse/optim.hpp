#pragma once

#include <vector>

#include "pulse/params.hpp"

namespace pulse {

struct AdamWConfig {
  double lr = 5e-5;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

/// AdamW with decoupled weight decay and bias-corrected moments. Frozen
/// parameters are skipped entirely; updated values are rounded to float.
class AdamW {
 public:
  AdamW(const ParameterStore& store, AdamWConfig config);

  /// Applies one update from the gradients held by `store`. Throws
  /// DivergenceError naming the first parameter with a non-finite gradient.
  void step(ParameterStore& store);
  int steps() const { return step_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  int step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace pulse
