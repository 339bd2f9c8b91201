#include "pulse/mstmap.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "pulse/error.hpp"

namespace pulse {

RoiTraceSet::RoiTraceSet(int rois, int channels, int frames, double rate)
    : n_rois(rois),
      n_channels(channels),
      length(frames),
      values(static_cast<std::size_t>(rois) * channels * frames, 0.0),
      fs(rate) {}

int RoiTraceSet::channel_index(const std::string& name) const {
  auto it = std::find(channel_names.begin(), channel_names.end(), name);
  return it == channel_names.end() ? -1 : static_cast<int>(it - channel_names.begin());
}

RoiTraceSet RoiTraceSet::slice(int start, int frames) const {
  if (start < 0 || frames < 0 || start + frames > length) throw InputError("trace slice out of range");
  RoiTraceSet out(n_rois, n_channels, frames, fs);
  out.subject_id = subject_id;
  out.channel_names = channel_names;
  for (int r = 0; r < n_rois; ++r)
    for (int c = 0; c < n_channels; ++c)
      for (int t = 0; t < frames; ++t) out.at(r, c, t) = at(r, c, start + t);
  return out;
}

std::vector<double> RoiTraceSet::subset_mean(std::uint32_t roi_mask, int channel) const {
  std::vector<double> out(static_cast<std::size_t>(length), 0.0);
  int count = 0;
  for (int r = 0; r < n_rois; ++r) {
    if (!(roi_mask & (1u << r))) continue;
    ++count;
    const auto tr = trace(r, channel);
    for (int t = 0; t < length; ++t) out[t] += tr[t];
  }
  if (count == 0) throw InputError("empty ROI subset");
  for (double& v : out) v /= count;
  return out;
}

void RoiTraceSet::validate() const {
  if (n_rois < 1 || n_channels < 1) throw InputError("trace set needs at least one ROI and channel");
  if (n_rois > 16) throw InputError("at most 16 ROIs are supported");
  if (length < 2) throw InputError("trace set is too short");
  if (values.size() != static_cast<std::size_t>(n_rois) * n_channels * length)
    throw InputError("trace value count does not match its shape");
  if (!channel_names.empty() && static_cast<int>(channel_names.size()) != n_channels)
    throw InputError("channel_names does not match channel count");
  if (!std::isfinite(fs) || fs <= 0.0) throw InputError("trace sampling rate must be positive");
  for (double v : values)
    if (!std::isfinite(v)) throw InputError("trace set contains a non-finite value");
}

std::vector<double> SignalMap::row_values(int r) const {
  const auto src = row(r);
  return {src.begin(), src.end()};
}

std::vector<double> condition_signal(std::span<const double> x, double fs, FreqBand band) {
  TimeSeries ts(std::vector<double>(x.begin(), x.end()), fs);
  return minmax_normalize(std::span<const double>(bandpass(ts, band).samples));
}

MstMap build_mstmap(const RoiTraceSet& traces, const MstOptions& options) {
  traces.validate();
  if (traces.length < 9) throw InputError("MSTmap needs at least 9 frames");
  if (options.time_divisor > 0 && traces.length % options.time_divisor != 0)
    throw InputError("trace length " + std::to_string(traces.length) + " is not divisible by " +
                     std::to_string(options.time_divisor));

  MstMap map;
  map.kind = MapKind::Mst;
  map.fs = traces.fs;
  map.length = traces.length;
  const std::uint32_t n_subsets = (1u << traces.n_rois) - 1u;
  map.rows = static_cast<int>(n_subsets) * traces.n_channels;
  map.data.resize(static_cast<std::size_t>(map.rows) * map.length);
  map.row_index.reserve(map.rows);

  int r = 0;
  for (std::uint32_t mask = 1; mask <= n_subsets; ++mask) {
    for (int c = 0; c < traces.n_channels; ++c, ++r) {
      const auto cond = condition_signal(traces.subset_mean(mask, c), traces.fs, options.band);
      std::transform(cond.begin(), cond.end(), map.row(r).begin(),
                     [](double v) { return static_cast<float>(v); });
      map.row_index.push_back({mask, c});
    }
  }
  return map;
}

BvpMap build_bvpmap(const TimeSeries& bvp, int r_rows, FreqBand band) {
  bvp.validate();
  if (r_rows < 1) throw InputError("BVP map needs at least one row");
  const auto cond = condition_signal(bvp.samples, bvp.fs, band);

  BvpMap map;
  map.kind = MapKind::Bvp;
  map.fs = bvp.fs;
  map.rows = r_rows;
  map.length = static_cast<int>(bvp.size());
  map.data.resize(static_cast<std::size_t>(r_rows) * map.length);
  for (int r = 0; r < r_rows; ++r) {
    std::transform(cond.begin(), cond.end(), map.row(r).begin(),
                   [](double v) { return static_cast<float>(v); });
  }
  return map;
}

// ---------------------------------------------------------------------------
// Stacking

namespace {

int round_up(int value, int multiple) {
  if (multiple <= 1) return value;
  return (value + multiple - 1) / multiple * multiple;
}

}  // namespace

StackLayout make_layout(int rows, int length, const StackOptions& options) {
  if (options.chunks < 1) throw InputError("chunk count must be positive");
  if (options.channels < 1) throw InputError("channel fold must be positive");
  if (length % options.chunks != 0)
    throw InputError("map length " + std::to_string(length) + " is not divisible by " +
                     std::to_string(options.chunks) + " chunks");
  if (rows % options.channels != 0)
    throw InputError("map rows " + std::to_string(rows) + " are not divisible by " +
                     std::to_string(options.channels) + " channels");
  StackLayout layout;
  layout.chunks = options.chunks;
  layout.channels = options.channels;
  layout.groups = rows / options.channels;
  layout.length = length;
  const int h0 = layout.chunks * layout.groups;
  const int w0 = length / layout.chunks;
  layout.pad_rows = round_up(h0, options.height_multiple) - h0;
  layout.pad_cols = round_up(w0, options.width_multiple) - w0;
  return layout;
}

std::pair<int, int> stacked_shape(const StackLayout& layout) {
  return {layout.chunks * layout.groups + layout.pad_rows, layout.length / layout.chunks + layout.pad_cols};
}

std::vector<std::size_t> stack_gather_index(const StackLayout& layout) {
  const auto [height, width] = stacked_shape(layout);
  const int h0 = layout.chunks * layout.groups;
  const int w0 = layout.length / layout.chunks;
  std::vector<std::size_t> index(static_cast<std::size_t>(height) * width * layout.channels);
  std::size_t i = 0;
  for (int h = 0; h < height; ++h) {
    const int hh = std::min(h, h0 - 1);
    const int chunk = hh / layout.groups;
    const int group = hh % layout.groups;
    for (int w = 0; w < width; ++w) {
      const int t = chunk * w0 + std::min(w, w0 - 1);
      for (int c = 0; c < layout.channels; ++c) {
        const int row = group * layout.channels + c;
        index[i++] = static_cast<std::size_t>(row) * layout.length + t;
      }
    }
  }
  return index;
}

std::vector<std::size_t> unstack_gather_index(const StackLayout& layout, int height, int width) {
  const auto [h_expected, w_expected] = stacked_shape(layout);
  if (h_expected != height || w_expected != width) throw FormatError("stacked image does not match its layout");
  const int w0 = layout.length / layout.chunks;
  const int rows = layout.groups * layout.channels;
  std::vector<std::size_t> index(static_cast<std::size_t>(rows) * layout.length);
  for (int row = 0; row < rows; ++row) {
    const int group = row / layout.channels;
    const int c = row % layout.channels;
    for (int t = 0; t < layout.length; ++t) {
      const int chunk = t / w0;
      const int h = chunk * layout.groups + group;
      const int w = t % w0;
      index[static_cast<std::size_t>(row) * layout.length + t] =
          (static_cast<std::size_t>(h) * width + w) * layout.channels + c;
    }
  }
  return index;
}

StackedMap stack_square(const SignalMap& map, const StackOptions& options) {
  if (map.data.size() != static_cast<std::size_t>(map.rows) * map.length)
    throw InputError("map data does not match its shape");
  StackedMap out;
  out.layout = make_layout(map.rows, map.length, options);
  std::tie(out.height, out.width) = stacked_shape(out.layout);
  out.channels = out.layout.channels;
  out.kind = map.kind;
  out.fs = map.fs;
  out.row_index = map.row_index;
  const auto index = stack_gather_index(out.layout);
  out.image.resize(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out.image[i] = map.data[index[i]];
  return out;
}

SignalMap unstack(const StackedMap& stacked) {
  const auto& layout = stacked.layout;
  if (layout.chunks < 1 || layout.channels < 1 || layout.groups < 1 || layout.length < 1 ||
      layout.length % layout.chunks != 0 || layout.channels != stacked.channels || layout.pad_rows < 0 ||
      layout.pad_cols < 0)
    throw FormatError("corrupt stacking layout");
  if (stacked.image.size() != static_cast<std::size_t>(stacked.height) * stacked.width * stacked.channels)
    throw FormatError("stacked image size does not match its shape");
  const auto index = unstack_gather_index(layout, stacked.height, stacked.width);

  SignalMap out;
  out.kind = stacked.kind;
  out.fs = stacked.fs;
  out.rows = layout.groups * layout.channels;
  out.length = layout.length;
  out.row_index = stacked.row_index;
  out.data.resize(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out.data[i] = stacked.image[index[i]];
  return out;
}

WindowSet window_samples(const RoiTraceSet& traces, int frames, int stride) {
  if (frames < 1 || stride < 1) throw InputError("window length and stride must be positive");
  WindowSet out;
  if (frames > traces.length) {
    out.too_short = true;
    return out;
  }
  for (int start = 0; start + frames <= traces.length; start += stride) {
    out.windows.push_back(traces.slice(start, frames));
    out.starts.push_back(start);
  }
  return out;
}

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::Mst: return "mst";
    case MapKind::Bvp: return "bvp";
    case MapKind::Pbvp: return "pbvp";
  }
  return "mst";
}

MapKind map_kind_from_string(const std::string& s) {
  if (s == "mst") return MapKind::Mst;
  if (s == "bvp") return MapKind::Bvp;
  if (s == "pbvp") return MapKind::Pbvp;
  throw FormatError("unknown map kind '" + s + "'");
}

}  // namespace pulse
