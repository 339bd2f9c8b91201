#include "pulse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <unordered_set>

#include "pulse/error.hpp"
#include "pulse/fft.hpp"

namespace pulse {

namespace {

constexpr double kMinSpread = 1e-10;

// Keeps the DFT bins whose (folded) frequency lies in the band.
void mask_spectrum(std::vector<fft::cplx>& spec, double fs, FreqBand band) {
  const std::size_t n = spec.size();
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = std::min(j, n - j);
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    if (k == 0 || !in_band(f, band)) spec[j] = 0.0;
  }
}

std::vector<double> real_part(const std::vector<fft::cplx>& z) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i].real();
  return out;
}

double spread(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

double window_value(Window window, std::size_t t, std::size_t n) {
  if (window == Window::Hann)
    return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n));
  return 1.0;
}

// Gradient of the in-band power ratio of x with respect to x.
std::vector<double> cpr_grad(std::span<const double> x, const LossOptions& o) {
  const Spectrum spec = psd(x, o.fs, o.window);
  double total = 0.0;
  for (double p : spec.power) total += p;
  std::vector<double> g(spec.power.size(), 0.0);
  if (!(total > 0.0)) return std::vector<double>(x.size(), 0.0);
  const double ratio = band_power_ratio(spec, o.band);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double inside = in_band(spec.frequency(k), o.band) ? 1.0 : 0.0;
    g[k] = (inside - ratio) / total;
  }
  return psd_backward(x, g, o.window);
}

void check_lengths(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("signals differ in length");
  if (x.size() < 8) throw InputError("signals need at least 8 samples");
}

}  // namespace

std::vector<double> band_limit(std::span<const double> x, double fs, FreqBand band) {
  auto spec = fft::forward(x);
  mask_spectrum(spec, fs, band);
  return real_part(fft::inverse(spec));
}

std::vector<double> psd_backward(std::span<const double> x, std::span<const double> grad_power, Window window) {
  const std::size_t n = x.size();
  const std::size_t bins = n / 2 + 1;
  if (grad_power.size() != bins) throw InputError("PSD gradient has the wrong bin count");
  const double m = mean(x);
  std::vector<double> w(n), u(n);
  double wsum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    w[t] = window_value(window, t, n);
    u[t] = w[t] * (x[t] - m);
    wsum += w[t] * w[t];
  }
  const auto spec = fft::forward(std::span<const double>(u));
  const double norm = static_cast<double>(n) * wsum;
  std::vector<fft::cplx> a(n, 0.0);
  for (std::size_t k = 0; k < bins; ++k) {
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    a[k] = (unpaired ? 1.0 : 2.0) * grad_power[k] / norm * spec[k];
  }
  const auto back = fft::inverse(a);
  std::vector<double> gx(n);
  double gmean = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    gx[t] = w[t] * 2.0 * static_cast<double>(n) * back[t].real();
    gmean += gx[t];
  }
  gmean /= static_cast<double>(n);
  for (double& v : gx) v -= gmean;
  return gx;
}

MccResult mcc_with_grad(std::span<const double> x, std::span<const double> y, const LossOptions& o,
                        std::span<double> grad_x) {
  check_lengths(x, y);
  const std::size_t n = x.size();
  const bool want_grad = !grad_x.empty();
  if (want_grad && grad_x.size() != n) throw InputError("gradient buffer has the wrong size");
  if (want_grad) std::fill(grad_x.begin(), grad_x.end(), 0.0);

  auto xs = fft::forward(x);
  auto ys = fft::forward(y);
  mask_spectrum(xs, o.fs, o.band);
  mask_spectrum(ys, o.fs, o.band);
  const auto xb = real_part(fft::inverse(xs));
  const auto yb = real_part(fft::inverse(ys));

  MccResult r;
  const double cx = band_power_ratio(psd(x, o.fs, o.window), o.band);
  switch (o.cpr) {
    case CprSource::Prediction: r.cpr = cx; break;
    case CprSource::Label: r.cpr = band_power_ratio(psd(y, o.fs, o.window), o.band); break;
    case CprSource::Geometric: r.cpr = std::sqrt(cx * band_power_ratio(psd(y, o.fs, o.window), o.band)); break;
  }

  const double sx = spread(xb), sy = spread(yb);
  if (sx <= kMinSpread || sy <= kMinSpread) {
    r.degenerate = true;
    return r;
  }

  std::vector<fft::cplx> cross(n);
  for (std::size_t j = 0; j < n; ++j) cross[j] = xs[j] * std::conj(ys[j]);
  const auto c = real_part(fft::inverse(cross));

  const double denom = static_cast<double>(n) * sx * sy;
  const int max_lag = static_cast<int>(std::lround(o.max_lag_seconds * o.fs));
  const auto nn = static_cast<long>(n);
  std::unordered_set<long> seen;
  bool first = true;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    const long idx = ((lag % nn) + nn) % nn;
    if (!seen.insert(idx).second) continue;
    const double rho = c[static_cast<std::size_t>(idx)] / denom;
    if (first || rho > r.rho) {
      r.rho = rho;
      r.lag = lag;
      first = false;
    }
  }
  r.value = r.cpr * r.rho;
  if (!want_grad) return r;

  // d rho / d xb, then through the (symmetric) band projection.
  std::vector<double> g(n);
  const long lag = r.lag;
  for (std::size_t t = 0; t < n; ++t) {
    const long src = (((static_cast<long>(t) - lag) % nn) + nn) % nn;
    g[t] = yb[static_cast<std::size_t>(src)] / denom - r.rho * xb[t] / (static_cast<double>(n) * sx * sx);
  }
  const auto grho = band_limit(g, o.fs, o.band);
  for (std::size_t t = 0; t < n; ++t) grad_x[t] = r.cpr * grho[t];

  if (o.cpr != CprSource::Label) {
    double scale = r.rho;
    if (o.cpr == CprSource::Geometric) scale *= r.cpr > 0.0 ? 0.5 * r.cpr / cx : 0.0;
    if (scale != 0.0) {
      const auto gc = cpr_grad(x, o);
      for (std::size_t t = 0; t < n; ++t) grad_x[t] += scale * gc[t];
    }
  }
  return r;
}

MccResult mcc(std::span<const double> x, std::span<const double> y, const LossOptions& options) {
  return mcc_with_grad(x, y, options, {});
}

double mcc(const TimeSeries& x, const TimeSeries& y, FreqBand band) {
  if (x.fs != y.fs) throw InputError("signals differ in sampling rate");
  LossOptions o;
  o.band = band;
  o.fs = x.fs;
  return mcc(std::span<const double>(x.samples), std::span<const double>(y.samples), o).value;
}

namespace {

void check_map(std::span<const double> x, std::span<const double> y, int rows, int length) {
  if (rows < 1 || length < 8) throw InputError("map needs at least one row of 8 samples");
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(length);
  if (x.size() != n || y.size() != n) throw InputError("map shapes do not match");
}

}  // namespace

MapLoss l_temp(std::span<const double> x, std::span<const double> y, int rows, int length, const LossOptions& o,
               bool want_grad) {
  check_map(x, y, rows, length);
  MapLoss out;
  if (want_grad) out.grad.assign(x.size(), 0.0);
  out.row_mcc.resize(static_cast<std::size_t>(rows));
  const auto len = static_cast<std::size_t>(length);
  double sum = 0.0;
  for (int r = 0; r < rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * len;
    std::span<double> g = want_grad ? std::span<double>(out.grad.data() + off, len) : std::span<double>();
    const auto m = mcc_with_grad(x.subspan(off, len), y.subspan(off, len), o, g);
    out.row_mcc[static_cast<std::size_t>(r)] = m.value;
    if (m.degenerate) ++out.degenerate_rows;
    sum += m.value;
  }
  out.value = 1.0 - sum / rows;
  if (want_grad)
    for (double& v : out.grad) v *= -1.0 / rows;
  return out;
}

MapLoss l_freq(std::span<const double> x, std::span<const double> y, int rows, int length, const LossOptions& o,
               bool want_grad) {
  check_map(x, y, rows, length);
  MapLoss out;
  if (want_grad) out.grad.assign(x.size(), 0.0);
  const auto len = static_cast<std::size_t>(length);
  double sum = 0.0;
  for (int r = 0; r < rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * len;
    const auto px = psd(x.subspan(off, len), o.fs, o.window);
    const auto py = psd(y.subspan(off, len), o.fs, o.window);
    std::vector<double> g(px.power.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double d = px.power[k] - py.power[k];
      sum += d * d;
      g[k] = 2.0 * d / rows;
    }
    if (want_grad) {
      const auto gx = psd_backward(x.subspan(off, len), g, o.window);
      std::copy(gx.begin(), gx.end(), out.grad.begin() + static_cast<std::ptrdiff_t>(off));
    }
  }
  out.value = sum / rows;
  return out;
}

RegLoss l_reg(double pred, double label) {
  const double d = pred - label;
  return {std::abs(d), d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)};
}

double combine(const LossWeights& w, double reg, double temp, double freq) {
  return w.alpha * reg + w.beta * temp + w.gamma * freq;
}

TotalLoss total_loss(const LossPrediction& pred, const LossTarget& target, const LossWeights& weights,
                     const LossOptions& options, std::span<const std::uint8_t> element_mask) {
  if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.gamma < 0.0)
    throw ConfigError("loss weights must be non-negative");
  TotalLoss out;
  auto& b = out.breakdown;
  if (!pred.map.empty()) {
    if (pred.map.size() != target.map.size()) throw InputError("prediction and target maps differ in shape");
    std::span<const double> x = pred.map;
    std::vector<double> composite;
    if (!element_mask.empty()) {
      if (element_mask.size() != pred.map.size()) throw InputError("element mask has the wrong size");
      composite.resize(pred.map.size());
      for (std::size_t i = 0; i < composite.size(); ++i)
        composite[i] = element_mask[i] ? pred.map[i] : target.map[i];
      x = composite;
    }
    const auto temp = l_temp(x, target.map, target.rows, target.length, options, true);
    const auto freq = l_freq(x, target.map, target.rows, target.length, options, true);
    b.l_temp = temp.value;
    b.l_freq = freq.value;
    b.row_mcc = temp.row_mcc;
    out.map_grad.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool live = element_mask.empty() || element_mask[i];
      out.map_grad[i] = live ? weights.beta * temp.grad[i] + weights.gamma * freq.grad[i] : 0.0;
    }
  }
  if (pred.has_hr && target.hr_valid) {
    const auto reg = l_reg(pred.hr, target.hr);
    b.l_reg = reg.value;
    out.hr_grad = weights.alpha * reg.grad;
  }
  b.total = combine(weights, b.l_reg, b.l_temp, b.l_freq);
  return out;
}

}  // namespace pulse
