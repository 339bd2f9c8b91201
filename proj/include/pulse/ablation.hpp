#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/selfsup.hpp"
#include "pulse/synth.hpp"
#include "pulse/trainer.hpp"

namespace pulse {

enum class AblationSuite { Components, Length, Pretext };

std::string to_string(AblationSuite s);
AblationSuite ablation_suite_from_string(const std::string& s);

/// Row names of a suite, in table order.
std::vector<std::string> ablation_grid(AblationSuite suite);

struct AblationConfig {
  /// Base supervised experiment; each row overrides one part of it.
  ExperimentConfig experiment;
  /// Pretext rows: training config of the pretraining stage.
  TrainConfig pretrain = TrainConfig{};
  /// Pretext rows: unlabeled pool drawn independently of the benchmark.
  BenchmarkConfig pool;

  nlohmann::json to_json() const;
  static AblationConfig from_json(const nlohmann::json& j);
};

struct AblationRow {
  std::string name;
  RunReport report;
};

struct AblationTable {
  AblationSuite suite = AblationSuite::Components;
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const;
  /// ablation.csv, ablation.json and one report directory per row.
  void write(const std::filesystem::path& dir) const;
};

/// Runs every row of a suite on `bench`. Pretraining checkpoints go under
/// `work_dir` when it is non-empty, otherwise to the temp directory.
AblationTable run_ablation(AblationSuite suite, const Benchmark& bench, const AblationConfig& cfg,
                           const std::filesystem::path& work_dir = {});

}  // namespace pulse
