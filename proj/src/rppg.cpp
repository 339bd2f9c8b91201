#include "pulse/rppg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "pulse/error.hpp"

namespace pulse {
namespace {

constexpr double kTinySigma = 1e-12;

std::vector<double> centered(std::span<const double> x) {
  const double m = mean(x);
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [m](double v) { return v - m; });
  return out;
}

TimeSeries band_limited(std::vector<double> x, double fs) {
  TimeSeries ts(std::move(x), fs);
  if (ts.size() < 2) return ts;
  return bandpass(ts, kHeartBand);
}

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

std::vector<int> window_starts(int n, int len) {
  std::vector<int> starts;
  if (n < len) return {0};
  const int hop = std::max(1, len / 2);
  for (int s = 0; s + len <= n; s += hop) starts.push_back(s);
  if (starts.back() + len < n) starts.push_back(n - len);
  return starts;
}

struct WindowSignals {
  std::vector<double> filtered;
  std::vector<double> raw;
};

// Runs `combine` on every window of the per-window mean-normalized channels
// and overlap-adds the Hann-weighted results.
template <typename Combine>
PulseEstimate overlap_add(const RgbTrace& t, Combine combine) {
  t.validate();
  const int n = static_cast<int>(t.g.size());
  const int len = std::min(n, rppg_window_length(t.g.fs));
  const auto w = hann(len);
  const auto starts = window_starts(n, len);

  std::vector<double> acc(n, 0.0), acc_raw(n, 0.0);
  PulseEstimate est;
  for (int s : starts) {
    std::array<std::vector<double>, 3> norm;
    const std::array<const TimeSeries*, 3> ch{&t.r, &t.g, &t.b};
    bool degenerate = false;
    for (int c = 0; c < 3; ++c) {
      std::span<const double> seg(ch[c]->samples.data() + s, static_cast<std::size_t>(len));
      const double m = mean(seg);
      if (std::abs(m) < kTinySigma) degenerate = true;
      norm[c].resize(len);
      for (int i = 0; i < len; ++i) norm[c][i] = degenerate ? 0.0 : seg[i] / m;
    }
    ++est.windows;
    std::optional<WindowSignals> out;
    if (!degenerate) out = combine(norm[0], norm[1], norm[2], t.g.fs);
    if (!out) {
      ++est.skipped_windows;
      continue;
    }
    for (int i = 0; i < len; ++i) {
      acc[s + i] += w[i] * out->filtered[i];
      acc_raw[s + i] += w[i] * out->raw[i];
    }
  }
  est.raw = TimeSeries(centered(acc_raw), t.g.fs);
  est.signal = band_limited(acc, t.g.fs);
  return est;
}

std::vector<double> window_bandpass(const std::vector<double>& x, double fs) {
  return bandpass(TimeSeries(x, fs), kHeartBand).samples;
}

}  // namespace

void RgbTrace::validate() const {
  r.validate();
  g.validate();
  b.validate();
  if (r.size() != g.size() || g.size() != b.size()) throw InputError("RGB channels differ in length");
  if (r.fs != g.fs || g.fs != b.fs) throw InputError("RGB channels differ in sampling rate");
}

RgbTrace RgbTrace::from_traces(const RoiTraceSet& traces, std::uint32_t roi_mask) {
  traces.validate();
  if (roi_mask == 0) roi_mask = (1u << traces.n_rois) - 1u;
  std::array<int, 3> idx{0, 1, 2};
  if (!traces.channel_names.empty()) {
    idx = {traces.channel_index("R"), traces.channel_index("G"), traces.channel_index("B")};
  }
  for (int i : idx)
    if (i < 0 || i >= traces.n_channels) throw InputError("trace set lacks R, G and B channels");
  RgbTrace out;
  out.r = TimeSeries(traces.subset_mean(roi_mask, idx[0]), traces.fs);
  out.g = TimeSeries(traces.subset_mean(roi_mask, idx[1]), traces.fs);
  out.b = TimeSeries(traces.subset_mean(roi_mask, idx[2]), traces.fs);
  return out;
}

std::string to_string(RppgMethod method) {
  switch (method) {
    case RppgMethod::Green: return "GREEN";
    case RppgMethod::Chrom: return "CHROM";
    case RppgMethod::Pos: return "POS";
    case RppgMethod::Lgi: return "LGI";
  }
  return "CHROM";
}

RppgMethod rppg_method_from_string(const std::string& s) {
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "GREEN") return RppgMethod::Green;
  if (up == "CHROM") return RppgMethod::Chrom;
  if (up == "POS") return RppgMethod::Pos;
  if (up == "LGI") return RppgMethod::Lgi;
  throw ConfigError("unknown rPPG method '" + s + "'");
}

int rppg_window_length(double fs) { return static_cast<int>(std::ceil(1.6 * fs)); }

PulseEstimate green(const RgbTrace& t) {
  t.validate();
  PulseEstimate est;
  est.raw = TimeSeries(centered(t.g.samples), t.g.fs);
  est.signal = bandpass(t.g, kHeartBand);
  est.windows = 1;
  return est;
}

PulseEstimate chrom(const RgbTrace& t) {
  return overlap_add(t, [](const std::vector<double>& r, const std::vector<double>& g, const std::vector<double>& b,
                           double fs) -> std::optional<WindowSignals> {
    const std::size_t n = r.size();
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 3.0 * r[i] - 2.0 * g[i];
      y[i] = 1.5 * r[i] + g[i] - 1.5 * b[i];
    }
    const auto xf = window_bandpass(x, fs);
    const auto yf = window_bandpass(y, fs);
    const double sy = stddev(yf);
    if (sy < kTinySigma) return std::nullopt;
    const double alpha = stddev(xf) / sy;
    const auto xc = centered(x), yc = centered(y);
    WindowSignals out{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      out.filtered[i] = xf[i] - alpha * yf[i];
      out.raw[i] = xc[i] - alpha * yc[i];
    }
    return out;
  });
}

PulseEstimate pos(const RgbTrace& t) {
  return overlap_add(t, [](const std::vector<double>& r, const std::vector<double>& g, const std::vector<double>& b,
                           double) -> std::optional<WindowSignals> {
    const std::size_t n = r.size();
    std::vector<double> s1(n), s2(n);
    for (std::size_t i = 0; i < n; ++i) {
      s1[i] = g[i] - b[i];
      s2[i] = g[i] + b[i] - 2.0 * r[i];
    }
    const double sd2 = stddev(s2);
    if (sd2 < kTinySigma) return std::nullopt;
    const double alpha = stddev(s1) / sd2;
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = s1[i] + alpha * s2[i];
    h = centered(h);
    return WindowSignals{h, h};
  });
}

PulseEstimate lgi(const RgbTrace& t) {
  t.validate();
  const auto n = static_cast<Eigen::Index>(t.g.size());
  Eigen::Matrix<double, 3, Eigen::Dynamic> m(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(0, i) = t.r.samples[i];
    m(1, i) = t.g.samples[i];
    m(2, i) = t.b.samples[i];
  }
  // Leading left singular vector of the channel matrix is the leading
  // eigenvector of its second-moment matrix.
  const Eigen::Matrix3d moment = m * m.transpose() / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(moment);
  const Eigen::Vector3d u = solver.eigenvectors().col(2);
  const Eigen::Matrix3d projection = Eigen::Matrix3d::Identity() - u * u.transpose();
  const Eigen::Matrix<double, 3, Eigen::Dynamic> projected = projection * m;

  std::vector<double> pulse(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) pulse[i] = projected(1, i);
  PulseEstimate est;
  est.raw = TimeSeries(centered(pulse), t.g.fs);
  est.signal = band_limited(est.raw.samples, t.g.fs);
  est.windows = 1;
  return est;
}

PulseEstimate estimate_pulse(const RgbTrace& t, RppgMethod method) {
  switch (method) {
    case RppgMethod::Green: return green(t);
    case RppgMethod::Chrom: return chrom(t);
    case RppgMethod::Pos: return pos(t);
    case RppgMethod::Lgi: return lgi(t);
  }
  throw ConfigError("unknown rPPG method");
}

PseudoLabel pseudo_hr(const RoiTraceSet& traces, RppgMethod method, std::uint32_t roi_mask) {
  const auto rgb = RgbTrace::from_traces(traces, roi_mask);
  const auto est = estimate_pulse(rgb, method);
  PseudoLabel label;
  label.method = method;
  label.confidence = band_power_ratio(est.raw, kHeartBand);
  try {
    label.hr_bpm = dominant_hr(psd(est.signal), kHeartBand);
  } catch (const NoPeakError&) {
    label.reliable = false;
    label.confidence = 0.0;
    return label;
  }
  label.reliable = label.confidence >= kMinPseudoConfidence && label.hr_bpm >= 60.0 * kHeartBand.lo - 1e-9 &&
                   label.hr_bpm <= 60.0 * kHeartBand.hi + 1e-9;
  return label;
}

PbvpMap build_pbvpmap(const RoiTraceSet& traces, RppgMethod method, FreqBand band) {
  traces.validate();
  const std::uint32_t n_subsets = (1u << traces.n_rois) - 1u;

  std::optional<std::vector<double>> fallback;
  auto all_roi = [&]() -> const std::vector<double>& {
    if (!fallback) {
      const auto est = estimate_pulse(RgbTrace::from_traces(traces, n_subsets), method);
      fallback = condition_signal(est.signal.samples, traces.fs, band);
    }
    return *fallback;
  };

  PbvpMap out;
  auto& map = out.map;
  map.kind = MapKind::Pbvp;
  map.fs = traces.fs;
  map.length = traces.length;
  map.rows = static_cast<int>(n_subsets) * traces.n_channels;
  map.data.resize(static_cast<std::size_t>(map.rows) * map.length);

  int r = 0;
  for (std::uint32_t mask = 1; mask <= n_subsets; ++mask) {
    std::vector<double> cond;
    bool failed = false;
    try {
      const auto est = estimate_pulse(RgbTrace::from_traces(traces, mask), method);
      cond = condition_signal(est.signal.samples, traces.fs, band);
      failed = std::all_of(cond.begin(), cond.end(), [](double v) { return v == 0.0; });
    } catch (const InputError&) {
      failed = true;
    }
    if (failed) cond = all_roi();
    for (int c = 0; c < traces.n_channels; ++c, ++r) {
      std::transform(cond.begin(), cond.end(), map.row(r).begin(), [](double v) { return static_cast<float>(v); });
      map.row_index.push_back({mask, c});
      if (failed) out.fallback_rows.push_back(r);
    }
  }
  return out;
}

}  // namespace pulse
