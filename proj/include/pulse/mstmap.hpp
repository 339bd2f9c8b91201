#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pulse/timeseries.hpp"

namespace pulse {

/// Per-frame mean pixel value of every (ROI, channel) pair.
struct RoiTraceSet {
  int n_rois = 0;
  int n_channels = 0;
  int length = 0;
  /// Layout [roi][channel][frame].
  std::vector<double> values;
  double fs = 30.0;
  std::string subject_id;
  std::vector<std::string> channel_names;

  RoiTraceSet() = default;
  RoiTraceSet(int rois, int channels, int frames, double rate);

  double& at(int roi, int channel, int t) { return values[index(roi, channel, t)]; }
  double at(int roi, int channel, int t) const { return values[index(roi, channel, t)]; }
  std::span<const double> trace(int roi, int channel) const {
    return {values.data() + index(roi, channel, 0), static_cast<std::size_t>(length)};
  }
  /// Index of a named channel, or -1.
  int channel_index(const std::string& name) const;
  /// Frames [start, start + frames) as a new trace set.
  RoiTraceSet slice(int start, int frames) const;
  /// Mean over the ROIs selected by `roi_mask` (bit r selects ROI r).
  std::vector<double> subset_mean(std::uint32_t roi_mask, int channel) const;

  /// Throws InputError on empty shapes, size mismatch or non-finite values.
  void validate() const;

 private:
  std::size_t index(int roi, int channel, int t) const {
    return (static_cast<std::size_t>(roi) * n_channels + channel) * length + t;
  }
};

/// Which ROI subset and channel a map row came from.
struct RowIndex {
  std::uint32_t roi_mask = 0;
  int channel = 0;
  bool operator==(const RowIndex&) const = default;
};

enum class MapKind { Mst, Bvp, Pbvp };

/// rows x length grid of conditioned signals. Every row lies in [0, 1].
/// Stored in single precision, which is also the on-disk precision.
struct SignalMap {
  MapKind kind = MapKind::Mst;
  int rows = 0;
  int length = 0;
  double fs = 30.0;
  std::vector<float> data;
  std::vector<RowIndex> row_index;

  std::span<float> row(int r) { return {data.data() + static_cast<std::size_t>(r) * length, static_cast<std::size_t>(length)}; }
  std::span<const float> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * length, static_cast<std::size_t>(length)};
  }
  std::vector<double> row_values(int r) const;
  bool operator==(const SignalMap&) const = default;
};

using MstMap = SignalMap;
using BvpMap = SignalMap;

/// How a SignalMap was folded into an image.
struct StackLayout {
  int chunks = 3;
  int groups = 0;      ///< source rows per image channel block (R_rows / channels)
  int channels = 1;    ///< consecutive source rows folded into image channels
  int length = 0;      ///< source T
  int pad_rows = 0;    ///< bottom rows repeated from the last real row
  int pad_cols = 0;    ///< right columns repeated from the last real column
  bool operator==(const StackLayout&) const = default;
};

/// H x W x C image, row-major with channels innermost. Temporal chunk k
/// occupies vertical block k (chunk 0 on top).
struct StackedMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> image;
  StackLayout layout;
  MapKind kind = MapKind::Mst;
  double fs = 30.0;
  std::vector<RowIndex> row_index;

  float& at(int h, int w, int c) { return image[(static_cast<std::size_t>(h) * width + w) * channels + c]; }
  float at(int h, int w, int c) const { return image[(static_cast<std::size_t>(h) * width + w) * channels + c]; }
  bool operator==(const StackedMap&) const = default;
};

struct StackOptions {
  int chunks = 3;
  int channels = 1;
  int height_multiple = 1;
  int width_multiple = 1;
};

struct MstOptions {
  FreqBand band = kHeartBand;
  /// T must be divisible by this (the later stacking chunk count).
  int time_divisor = 3;
};

/// Bandpass + min-max conditioning applied to every map row.
std::vector<double> condition_signal(std::span<const double> x, double fs, FreqBand band);

/// One row per (non-empty ROI subset, channel); subsets in binary counting
/// order, channels innermost.
MstMap build_mstmap(const RoiTraceSet& traces, const MstOptions& options = {});

/// `r_rows` copies of the conditioned BVP.
BvpMap build_bvpmap(const TimeSeries& bvp, int r_rows, FreqBand band = kHeartBand);

StackedMap stack_square(const SignalMap& map, const StackOptions& options = {});
SignalMap unstack(const StackedMap& stacked);

/// Per-pixel source-row/time lookup of a stacking layout: for each image
/// element (h, w, c) the flat index row * length + t it was read from.
std::vector<std::size_t> stack_gather_index(const StackLayout& layout);
/// For each source element (row, t) the image element holding it.
std::vector<std::size_t> unstack_gather_index(const StackLayout& layout, int height, int width);
/// Image shape implied by a layout.
std::pair<int, int> stacked_shape(const StackLayout& layout);
StackLayout make_layout(int rows, int length, const StackOptions& options);

struct WindowSet {
  std::vector<RoiTraceSet> windows;
  std::vector<int> starts;
  bool too_short = false;
};

/// Windows of `frames` samples every `stride` frames; a remainder shorter
/// than a window is dropped.
WindowSet window_samples(const RoiTraceSet& traces, int frames, int stride);

// Map file format: "PSUMAP01", u32 LE header length, UTF-8 JSON header,
// row-major little-endian float32 payload.
void write_map(const std::filesystem::path& path, const SignalMap& map);
void write_map(const std::filesystem::path& path, const StackedMap& map);
SignalMap read_signal_map(const std::filesystem::path& path);
StackedMap read_stacked_map(const std::filesystem::path& path);

std::string to_string(MapKind kind);
MapKind map_kind_from_string(const std::string& s);

}  // namespace pulse
