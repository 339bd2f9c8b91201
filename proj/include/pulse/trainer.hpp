#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/dataset.hpp"
#include "pulse/losses.hpp"
#include "pulse/metrics.hpp"
#include "pulse/model.hpp"
#include "pulse/optim.hpp"
#include "pulse/synth.hpp"

namespace pulse {

/// Test-time HR source: the regression head, or the spectral peak of the
/// reconstructed map.
enum class Readout { Head, Map };

std::string to_string(Readout r);
Readout readout_from_string(const std::string& s);

struct TrainConfig {
  double lr = 5e-5;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  int batch = 8;
  int epochs = 50;
  int frames = 576;
  int stride = 30;
  std::uint64_t seed = 0;
  /// Stops after this many optimizer steps when positive.
  int max_steps = 0;
  LossWeights weights;
  LossOptions loss;
  bool loss_on_masked_only = false;
  Readout readout = Readout::Head;
  /// Records test-fold MAE after every epoch.
  bool validate_each_epoch = true;

  /// Defaults for fine-tuning from a checkpoint (25 epochs).
  static TrainConfig fine_tune();
  void validate() const;
  AdamWConfig adamw() const { return {lr, weight_decay, beta1, beta2, epsilon}; }
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig defaults);
};

struct CurvePoint {
  int step = 0;
  int epoch = 0;
  double total = 0.0;
  double l_reg = 0.0;
  double l_temp = 0.0;
  double l_freq = 0.0;
};

struct TrainLog {
  std::vector<CurvePoint> curve;
  /// Test MAE per epoch when validation samples were supplied.
  std::vector<double> validation_mae;
  int steps = 0;
};

/// Loss of one sample; with `backward`, gradients scaled by `scale` are
/// accumulated into the model's parameters.
LossBreakdown sample_loss(const SwinUnet& model, const Sample& sample, const TrainConfig& cfg, bool backward,
                          double scale = 1.0);

/// AdamW over seeded shuffled minibatches. Throws DivergenceError on a
/// non-finite loss or gradient.
TrainLog train_model(SwinUnet& model, const std::vector<Sample>& samples, const TrainConfig& cfg,
                     const std::vector<Sample>* validation = nullptr);

/// Per-sample HR predictions in bpm.
std::vector<double> predict_hr(const SwinUnet& model, const std::vector<Sample>& samples, Readout readout);
/// Reconstructed map of one sample in map-row form.
std::vector<double> predict_rows(const SwinUnet& model, const Sample& sample);

/// Everything needed to rebuild a run.
struct ExperimentConfig {
  TrainConfig train;
  ModelConfig model;
  DataConfig data;
  ModelVariant variant = ModelVariant::Full;
  int folds = 5;
  /// Runs only the first max_folds folds when positive.
  int max_folds = 0;
  std::uint64_t split_seed = 0;

  /// Applies the variant's data-side changes (the unstacked variant uses a
  /// single chunk) and copies train.frames/stride into the data config.
  ExperimentConfig resolved() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct FoldReport {
  int fold = 0;
  std::vector<std::string> test_subjects;
  Metrics metrics;
  std::vector<double> pred_bpm;
  std::vector<double> true_bpm;
  TrainLog log;
  std::string checkpoint;
};

struct RunReport {
  std::string kind;
  std::string run_id;
  std::string parent_run_id;
  nlohmann::json config;
  std::vector<std::vector<std::string>> folds;
  std::vector<FoldReport> fold_reports;
  std::optional<Metrics> pooled;
  /// Loss curve of a single-model run (pretraining).
  std::vector<CurvePoint> curve;
  std::string checkpoint;

  nlohmann::json to_json() const;
  /// report.json, metrics.csv and loss_curve.csv.
  void write(const std::filesystem::path& dir) const;
};

/// Stable hex digest of a JSON document.
std::string run_id_for(const nlohmann::json& j);

/// Optional initialization of every fold's model.
struct InitSpec {
  std::filesystem::path checkpoint;
  /// Train only the HR head's final fully-connected layer.
  bool probe = false;
  std::string parent_run_id;
};

/// Subject-exclusive k-fold training and testing. Fold checkpoints are
/// written to `checkpoint_dir` when it is non-empty.
RunReport cross_validate(const Benchmark& bench, const ExperimentConfig& exp, const InitSpec& init = {},
                         const std::filesystem::path& checkpoint_dir = {}, const std::string& kind = "train");

RunReport train_supervised(const Benchmark& bench, const ExperimentConfig& exp,
                           const std::filesystem::path& checkpoint_dir = {});

/// Non-overlapping windows of every subject through a saved model.
RunReport evaluate(const std::filesystem::path& checkpoint, const Benchmark& bench, const ExperimentConfig& exp);

/// Rebuilds a model from a checkpoint written by this harness.
std::unique_ptr<SwinUnet> load_model(const std::filesystem::path& checkpoint);
/// Checkpoint header config for a model trained under `exp`.
nlohmann::json checkpoint_config(const SwinUnet& model, const ExperimentConfig& exp, const std::string& run_id);

}  // namespace pulse
