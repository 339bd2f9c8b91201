#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/mstmap.hpp"
#include "pulse/timeseries.hpp"

namespace pulse {

/// Beat-template harmonic amplitudes (fundamental and two overtones) and the
/// phase offsets that give the waveform its secondary, dicrotic-like hump.
inline constexpr double kHarmonicAmps[3] = {1.0, 0.35, 0.2};
inline constexpr double kHarmonicPhases[3] = {0.0, -1.2, -2.4};

/// Decorrelates derived seeds (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t x);

struct SynthConfig {
  double hr_bpm = 72.0;
  double fs = 30.0;
  int frames = 576;
  std::vector<double> harmonic_amps{kHarmonicAmps[0], kHarmonicAmps[1], kHarmonicAmps[2]};
  /// Standard deviation of per-beat period noise, seconds.
  double hrv_jitter = 0.0;
  /// Standard deviation of white noise added to every R, G, B trace.
  double noise_std = 0.0;
  /// Relative amplitude of the multiplicative low-frequency intensity drift.
  double drift = 0.0;
  /// Drift frequency; negative draws one from [0.2, 0.4] Hz.
  double drift_hz = -1.0;
  /// Pulse amplitude (in trace units, for a unit-RMS BVP) of R, G, B.
  std::vector<double> pulse_strength{0.25, 0.42, 0.24};
  std::vector<double> baseline{150.0, 110.0, 90.0};
  /// Relative spread of per-ROI pulse gain.
  double roi_gain_spread = 0.2;
  int n_rois = 4;
  /// Append Y, U, V channels derived from R, G, B.
  bool yuv = true;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Beat onsets (seconds) and durations of a generated pulse.
struct BeatTrain {
  std::vector<double> onsets;
  std::vector<double> periods;

  /// 60 / mean period of the beats whose onsets fall in [t0, t1); the
  /// nearest beat's rate when none does.
  double hr_between(double t0, double t1) const;
};

struct SynthBvp {
  TimeSeries bvp;
  BeatTrain beats;
  /// 60 / mean period over the whole signal.
  double hr_bpm = 0.0;
};

/// Quasi-periodic unit-RMS BVP with per-beat period jitter.
SynthBvp gen_bvp(const SynthConfig& cfg);

struct SynthSubject {
  RoiTraceSet traces;
  TimeSeries bvp;
  BeatTrain beats;
  double hr_bpm = 0.0;

  /// Ground-truth HR of frames [start, start + frames).
  double window_hr(int start, int frames) const;
};

/// ROI traces: baseline * (1 + drift) + pulse_strength * roi_gain * bvp + noise.
SynthSubject gen_traces(const SynthConfig& cfg);

struct BenchmarkConfig {
  int n_subjects = 10;
  int windows_per_subject = 2;
  int frames = 576;
  double fs = 30.0;
  double hr_lo = 50.0;
  double hr_hi = 150.0;
  double hrv_jitter = 0.02;
  double noise_std = 0.21;
  double drift = 0.01;
  int n_rois = 4;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static BenchmarkConfig from_json(const nlohmann::json& j);
};

struct Benchmark {
  BenchmarkConfig config;
  std::vector<std::string> ids;
  std::vector<SynthSubject> subjects;
};

/// Subjects of windows_per_subject * frames samples each, HR drawn
/// uniformly per subject.
Benchmark gen_benchmark(const BenchmarkConfig& cfg);

/// Per subject `<id>.csv`, `<id>.json` and `<id>_bvp.csv`, plus
/// `labels.json` with the configuration and every beat train.
void write_benchmark(const std::filesystem::path& dir, const Benchmark& bench);
Benchmark read_benchmark(const std::filesystem::path& dir);

}  // namespace pulse
