#include "pulse/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <string>

#include "pulse/error.hpp"
#include "pulse/fft.hpp"

namespace pulse {

TimeSeries::TimeSeries(std::vector<double> s, double rate) : samples(std::move(s)), fs(rate) {}

void TimeSeries::validate() const {
  if (samples.size() < 2) throw InputError("time series needs at least 2 samples");
  if (!std::isfinite(fs) || fs <= 0.0) throw InputError("sampling rate must be finite and positive");
  for (double v : samples) {
    if (!std::isfinite(v)) throw InputError("time series contains a non-finite sample");
  }
}

void FreqBand::validate(double fs) const {
  if (!(lo > 0.0 && lo < hi && hi < fs / 2.0)) {
    throw InputError("band [" + std::to_string(lo) + ", " + std::to_string(hi) +
                     "] Hz is invalid for fs=" + std::to_string(fs));
  }
}

bool in_band(double freq, FreqBand band) {
  constexpr double kSlack = 1e-9;
  return freq >= band.lo - kSlack && freq <= band.hi + kSlack;
}

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// Filter design

std::vector<SecondOrderSection> butterworth_bandpass(int order, FreqBand band, double fs) {
  using cplx = std::complex<double>;
  if (order < 1) throw InputError("filter order must be positive");
  band.validate(fs);

  // Bilinear transform with sample rate 2, edges pre-warped.
  constexpr double kPi = std::numbers::pi;
  const double w1 = 4.0 * std::tan(kPi * band.lo / fs);
  const double w2 = 4.0 * std::tan(kPi * band.hi / fs);
  const double bw = w2 - w1;
  const double wo = std::sqrt(w1 * w2);

  std::vector<cplx> analog_poles;
  for (int m = -order + 1; m < order; m += 2) {
    const cplx proto = -std::exp(cplx(0.0, kPi * m / (2.0 * order)));
    const cplx a = proto * (bw / 2.0);
    const cplx d = std::sqrt(a * a - wo * wo);
    analog_poles.push_back(a + d);
    analog_poles.push_back(a - d);
  }

  // `order` analog zeros at s = 0 map to z = 1, the rest (at infinity) to z = -1.
  cplx denom(1.0, 0.0);
  std::vector<cplx> poles;
  for (const auto& p : analog_poles) {
    denom *= (4.0 - p);
    poles.push_back((4.0 + p) / (4.0 - p));
  }
  const double gain = (std::pow(bw, order) * std::pow(4.0, order) / denom).real();

  // Pair conjugate poles; real poles are paired with each other.
  std::vector<cplx> upper;
  std::vector<double> reals;
  for (const auto& p : poles) {
    if (std::abs(p.imag()) <= 1e-12 * std::max(1.0, std::abs(p))) {
      reals.push_back(p.real());
    } else if (p.imag() > 0.0) {
      upper.push_back(p);
    }
  }
  std::sort(upper.begin(), upper.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
  std::sort(reals.begin(), reals.end());

  std::vector<SecondOrderSection> sos;
  for (const auto& p : upper) {
    sos.push_back({1.0, 0.0, -1.0, 1.0, -2.0 * p.real(), std::norm(p)});
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    sos.push_back({1.0, 0.0, -1.0, 1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }
  if (sos.size() != static_cast<std::size_t>(order)) {
    throw InputError("unexpected pole layout in band-pass design");
  }
  for (int k = 0; k < 3; ++k) sos.front()[k] *= gain;
  return sos;
}

namespace {

std::array<double, 2> section_steady_state(const SecondOrderSection& s) {
  const double gain = (s[0] + s[1] + s[2]) / (1.0 + s[4] + s[5]);
  const double z2 = s[2] - s[5] * gain;
  const double z1 = s[1] + s[2] - (s[4] + s[5]) * gain;
  return {z1, z2};
}

// Transposed direct form II, states updated in place.
void sosfilt_inplace(std::span<const SecondOrderSection> sos, std::vector<double>& x,
                     std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& s = sos[k];
    double z1 = state[k][0];
    double z2 = state[k][1];
    for (double& v : x) {
      const double in = v;
      const double out = s[0] * in + z1;
      z1 = s[1] * in - s[4] * out + z2;
      z2 = s[2] * in - s[5] * out;
      v = out;
    }
  }
}

}  // namespace

std::vector<double> sos_filtfilt(std::span<const SecondOrderSection> sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return {x.begin(), x.end()};

  std::size_t zero_b2 = 0, zero_a2 = 0;
  for (const auto& s : sos) {
    zero_b2 += s[2] == 0.0;
    zero_a2 += s[5] == 0.0;
  }
  std::size_t padlen = 3 * (2 * sos.size() + 1 - std::min(zero_b2, zero_a2));
  padlen = std::min(padlen, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  std::vector<std::array<double, 2>> zi(sos.size());
  double scale = 1.0;
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto ss = section_steady_state(sos[k]);
    zi[k] = {ss[0] * scale, ss[1] * scale};
    const auto& s = sos[k];
    scale *= (s[0] + s[1] + s[2]) / (1.0 + s[4] + s[5]);
  }

  auto scaled = [&](double x0) {
    auto z = zi;
    for (auto& p : z) {
      p[0] *= x0;
      p[1] *= x0;
    }
    return z;
  };

  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

TimeSeries bandpass(const TimeSeries& ts, FreqBand band) {
  ts.validate();
  const auto sos = butterworth_bandpass(4, band, ts.fs);
  const double m = mean(ts.samples);
  std::vector<double> centered(ts.samples.size());
  std::transform(ts.samples.begin(), ts.samples.end(), centered.begin(),
                 [m](double v) { return v - m; });
  return {sos_filtfilt(sos, centered), ts.fs};
}

// ---------------------------------------------------------------------------
// Normalization

std::vector<double> minmax_normalize(std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  if (x.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (range <= 1e-12) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - lo) / range;
  return out;
}

TimeSeries minmax_normalize(const TimeSeries& ts) {
  if (ts.size() < 2) throw InputError("min-max normalization needs at least 2 samples");
  return {minmax_normalize(std::span<const double>(ts.samples)), ts.fs};
}

// ---------------------------------------------------------------------------
// Spectra

Spectrum psd(std::span<const double> x, double fs, Window window) {
  const std::size_t n = x.size();
  if (n < 8) throw InputError("PSD needs at least 8 samples");
  if (!(fs > 0.0)) throw InputError("sampling rate must be positive");

  const double m = mean(x);
  std::vector<double> u(n);
  double wsum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    if (window == Window::Hann) {
      w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n));
    }
    u[t] = w * (x[t] - m);
    wsum += w * w;
  }
  const auto spec = fft::forward(std::span<const double>(u));

  Spectrum out;
  out.fs = fs;
  out.freq_resolution = fs / static_cast<double>(n);
  const std::size_t bins = n / 2 + 1;
  out.power.resize(bins);
  const double norm = static_cast<double>(n) * wsum;
  for (std::size_t k = 0; k < bins; ++k) {
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    out.power[k] = (unpaired ? 1.0 : 2.0) * std::norm(spec[k]) / norm;
  }
  return out;
}

Spectrum psd(const TimeSeries& ts, Window window) { return psd(ts.samples, ts.fs, window); }

double dominant_hr(const Spectrum& spec, FreqBand band) {
  const auto& p = spec.power;
  std::ptrdiff_t best = -1;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!in_band(spec.frequency(k), band)) continue;
    if (best < 0 || p[k] > p[static_cast<std::size_t>(best)]) best = static_cast<std::ptrdiff_t>(k);
  }
  if (best < 0) throw InputError("band lies outside the spectrum");
  const auto k = static_cast<std::size_t>(best);
  if (!(p[k] > 0.0)) throw NoPeakError("no spectral power inside the band");

  double offset = 0.0;
  if (k >= 1 && k + 1 < p.size()) {
    const double a = p[k - 1], b = p[k], c = p[k + 1];
    const double curvature = a - 2.0 * b + c;
    if (curvature < 0.0) offset = std::clamp(0.5 * (a - c) / curvature, -0.5, 0.5);
  }
  return 60.0 * (static_cast<double>(k) + offset) * spec.freq_resolution;
}

double band_power_ratio(const Spectrum& spec, FreqBand band) {
  double inside = 0.0, total = 0.0;
  for (std::size_t k = 0; k < spec.power.size(); ++k) {
    total += spec.power[k];
    if (in_band(spec.frequency(k), band)) inside += spec.power[k];
  }
  if (!(total > 0.0)) return 0.0;
  return inside / total;
}

double band_power_ratio(const TimeSeries& x, FreqBand band) {
  return band_power_ratio(psd(x), band);
}

}  // namespace pulse
