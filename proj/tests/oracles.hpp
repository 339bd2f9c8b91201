#pragma once

// Slow, direct reference implementations. They share no code with the
// library beyond plain types.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

inline std::vector<cplx> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      s += x[t] * cplx(std::cos(a), std::sin(a));
    }
    out[k] = s;
  }
  return out;
}

inline std::vector<double> idft_real(const std::vector<cplx>& X) {
  const std::size_t n = X.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    cplx s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      s += X[k] * cplx(std::cos(a), std::sin(a));
    }
    out[t] = s.real() / static_cast<double>(n);
  }
  return out;
}

/// One-sided periodogram of the mean-removed signal; bins sum to the mean
/// square.
inline std::vector<double> psd(std::vector<double> x) {
  const std::size_t n = x.size();
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(n);
  for (double& v : x) v -= m;
  const auto X = dft(x);
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    p[k] = (unpaired ? 1.0 : 2.0) * std::norm(X[k]) / static_cast<double>(n * n);
  }
  return p;
}

inline bool in_band(double f, double lo, double hi) { return f >= lo && f <= hi; }

inline double band_ratio(const std::vector<double>& x, double fs, double lo, double hi) {
  const auto p = psd(x);
  double in = 0.0, total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    total += p[k];
    if (in_band(static_cast<double>(k) * fs / static_cast<double>(x.size()), lo, hi)) in += p[k];
  }
  return total > 0.0 ? in / total : 0.0;
}

/// Hard DFT band mask (DC removed), via the direct transform.
inline std::vector<double> band_limit(const std::vector<double>& x, double fs, double lo, double hi) {
  auto X = dft(x);
  const std::size_t n = x.size();
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = std::min(j, n - j);
    if (k == 0 || !in_band(static_cast<double>(k) * fs / static_cast<double>(n), lo, hi)) X[j] = 0.0;
  }
  return idft_real(X);
}

/// In-band power ratio of x times the best time-domain circular
/// correlation of the band-limited signals over lags in [-max_lag, max_lag].
inline double mcc(const std::vector<double>& x, const std::vector<double>& y, double fs, double lo, double hi,
                  int max_lag) {
  const auto xb = band_limit(x, fs, lo, hi);
  const auto yb = band_limit(y, fs, lo, hi);
  const long n = static_cast<long>(x.size());
  double sx = 0.0, sy = 0.0;
  for (long t = 0; t < n; ++t) {
    sx += xb[t] * xb[t];
    sy += yb[t] * yb[t];
  }
  sx = std::sqrt(sx / n);
  sy = std::sqrt(sy / n);
  double best = -1e300;
  for (long lag = -max_lag; lag <= max_lag; ++lag) {
    double c = 0.0;
    for (long t = 0; t < n; ++t) c += xb[t] * yb[(((t - lag) % n) + n) % n];
    best = std::max(best, c / (n * sx * sy));
  }
  return band_ratio(x, fs, lo, hi) * best;
}

/// Single-head dense softmax(q k^T * scale + bias) v. q, k, v are [n, d].
inline std::vector<double> dense_attention(const std::vector<double>& q, const std::vector<double>& k,
                                           const std::vector<double>& v, int n, int d, double scale,
                                           const std::vector<double>& bias) {
  std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> s(n);
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
      s[j] = dot * scale + bias[static_cast<std::size_t>(i) * n + j];
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (double& e : s) z += (e = std::exp(e - mx));
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < d; ++c) out[i * d + c] += s[j] / z * v[j * d + c];
  }
  return out;
}

/// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Sum of sinusoids (amplitude, Hz, phase) sampled at fs.
inline std::vector<double> tones(int n, double fs, const std::vector<std::array<double, 3>>& parts) {
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  for (int t = 0; t < n; ++t)
    for (const auto& p : parts) x[t] += p[0] * std::sin(2.0 * std::numbers::pi * p[1] * t / fs + p[2]);
  return x;
}

inline std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> x(n);
  for (double& v : x) v = d(rng);
  return x;
}

}  // namespace oracle
