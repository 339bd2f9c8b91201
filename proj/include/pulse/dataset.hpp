#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pulse/model.hpp"
#include "pulse/mstmap.hpp"
#include "pulse/synth.hpp"

namespace pulse {

struct DataConfig {
  int frames = 576;
  int stride = 30;
  /// Temporal chunks stacked vertically; 1 keeps the map rectangular.
  int chunks = 3;
  /// Colour channels become extra map rows instead of image channels.
  bool rows_mode = false;
  FreqBand band = kHeartBand;

  /// Window length actually used: frames trimmed to a multiple of chunks.
  int effective_frames() const { return frames - frames % chunks; }
};

/// One model input with its map target (in map-row form) and HR label.
struct Sample {
  StackedMap input;
  /// rows x length, row-major; empty when the sample has no map target.
  std::vector<double> target_rows;
  int rows = 0;
  int length = 0;
  /// For every map element (row, t) the input image element holding it.
  std::shared_ptr<const std::vector<std::size_t>> unstack_index;
  /// rows x length flags of elements hidden from the input; empty if none.
  std::vector<std::uint8_t> masked_elements;
  double hr_label = 0.0;  ///< scaled to [0, 1]
  bool hr_valid = false;
  double hr_bpm = 0.0;    ///< ground truth, for metrics
  std::string subject;
  int start = 0;
};

/// Stacking options that tile into `model`'s patches and windows.
StackOptions stack_options(const DataConfig& data, const ModelConfig& model, int n_channels);
/// `base` with input and output shapes taken from a sample.
ModelConfig fit_model(ModelConfig base, const Sample& sample);

/// Stacked MSTmap input, conditioned-BVP rows as target, HR label.
Sample supervised_sample(const RoiTraceSet& window, const TimeSeries& bvp, double hr_bpm, const DataConfig& data,
                         const StackOptions& stack);

/// Windows of `stride` frames over the named subjects of a benchmark.
std::vector<Sample> supervised_samples(const Benchmark& bench, const std::vector<std::string>& subjects,
                                       const DataConfig& data, const StackOptions& stack, int stride);

/// Per-subject sliding windows: (subject index, start frame).
std::vector<std::pair<std::size_t, int>> window_plan(const Benchmark& bench, const std::vector<std::string>& subjects,
                                                     int frames, int stride);

}  // namespace pulse
