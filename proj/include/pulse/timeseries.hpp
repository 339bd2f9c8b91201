#pragma once

#include <array>
#include <span>
#include <vector>

namespace pulse {

/// Uniformly sampled real signal.
struct TimeSeries {
  std::vector<double> samples;
  double fs = 0.0;

  TimeSeries() = default;
  TimeSeries(std::vector<double> s, double rate);

  std::size_t size() const { return samples.size(); }
  /// Throws InputError unless length >= 2, fs > 0 and all samples finite.
  void validate() const;
};

/// One-sided power spectrum. Bin k sits at k * freq_resolution Hz.
struct Spectrum {
  std::vector<double> power;
  double freq_resolution = 0.0;
  double fs = 0.0;

  double frequency(std::size_t bin) const { return static_cast<double>(bin) * freq_resolution; }
};

/// Pass band in Hz.
struct FreqBand {
  double lo = 0.7;
  double hi = 3.0;

  /// Throws InputError unless 0 < lo < hi < fs/2.
  void validate(double fs) const;
};

/// The HR-relevant band, 42 to 180 bpm.
inline constexpr FreqBand kHeartBand{0.7, 3.0};

/// Biquad coefficients {b0, b1, b2, a0, a1, a2} with a0 == 1.
using SecondOrderSection = std::array<double, 6>;

/// Digital Butterworth band-pass of prototype order `order` as a cascade of
/// second-order sections (bilinear transform with pre-warped edges).
std::vector<SecondOrderSection> butterworth_bandpass(int order, FreqBand band, double fs);

/// Zero-phase forward-backward cascade filtering with odd-extension padding
/// and steady-state initial conditions.
std::vector<double> sos_filtfilt(std::span<const SecondOrderSection> sos, std::span<const double> x);

/// Mean-removed, zero-phase order-4 Butterworth band-pass.
TimeSeries bandpass(const TimeSeries& ts, FreqBand band);

/// Maps to [0, 1]; constant input (range <= 1e-12) maps to zeros.
TimeSeries minmax_normalize(const TimeSeries& ts);
std::vector<double> minmax_normalize(std::span<const double> x);

enum class Window { Rectangular, Hann };

/// Single-segment periodogram of the mean-removed signal, one-sided, scaled so
/// that the bins sum to the (window-weighted) mean square of the signal.
Spectrum psd(const TimeSeries& ts, Window window = Window::Rectangular);
Spectrum psd(std::span<const double> x, double fs, Window window = Window::Rectangular);

/// 60 x frequency of the strongest in-band bin, refined by a 3-point
/// parabola through the neighbouring bins. Throws InputError when the band
/// holds no power.
double dominant_hr(const Spectrum& spec, FreqBand band = kHeartBand);

/// In-band power over total power; 0 when the signal carries no power.
double band_power_ratio(const TimeSeries& x, FreqBand band = kHeartBand);
double band_power_ratio(const Spectrum& spec, FreqBand band = kHeartBand);

/// True when bin frequency lies inside [lo, hi].
bool in_band(double freq, FreqBand band);

double mean(std::span<const double> x);
double stddev(std::span<const double> x);

}  // namespace pulse
