#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pulse/mstmap.hpp"
#include "pulse/timeseries.hpp"

namespace pulse {

/// Mean skin colour per frame.
struct RgbTrace {
  TimeSeries r, g, b;

  void validate() const;
  /// Averages the R, G and B channels over the ROIs in `roi_mask`
  /// (0 selects every ROI). Channels are located by name, falling back to
  /// indices 0, 1, 2 when the trace set is unnamed.
  static RgbTrace from_traces(const RoiTraceSet& traces, std::uint32_t roi_mask = 0);
};

enum class RppgMethod { Green, Chrom, Pos, Lgi };

std::string to_string(RppgMethod method);
RppgMethod rppg_method_from_string(const std::string& s);

/// Output of a classical estimator. `signal` is band-passed and zero-mean;
/// `raw` is the same estimate before the final band limiting and is what the
/// confidence score is computed from.
struct PulseEstimate {
  TimeSeries signal;
  TimeSeries raw;
  int windows = 0;
  int skipped_windows = 0;
};

/// Overlap-add window used by CHROM and POS: 1.6 s, hop of half a window.
int rppg_window_length(double fs);

PulseEstimate green(const RgbTrace& t);
PulseEstimate chrom(const RgbTrace& t);
PulseEstimate pos(const RgbTrace& t);
PulseEstimate lgi(const RgbTrace& t);
PulseEstimate estimate_pulse(const RgbTrace& t, RppgMethod method);

/// Heart-rate pseudo-label from a classical method.
struct PseudoLabel {
  double hr_bpm = 0.0;
  RppgMethod method = RppgMethod::Chrom;
  double confidence = 0.0;
  bool reliable = false;
};

/// Labels below this confidence are excluded from the regression loss.
inline constexpr double kMinPseudoConfidence = 0.2;

PseudoLabel pseudo_hr(const RoiTraceSet& traces, RppgMethod method, std::uint32_t roi_mask = 0);

struct PbvpMap {
  SignalMap map;
  /// Rows whose subset estimate failed and fell back to the all-ROI signal.
  std::vector<int> fallback_rows;
};

/// Pseudo-BVP map with the MSTmap's row layout: each ROI subset's mean RGB
/// trace is run through `method` and conditioned; the subset's row is
/// repeated for every channel.
PbvpMap build_pbvpmap(const RoiTraceSet& traces, RppgMethod method, FreqBand band = kHeartBand);

}  // namespace pulse
