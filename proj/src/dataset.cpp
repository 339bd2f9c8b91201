#include "pulse/dataset.hpp"

#include <algorithm>

#include "pulse/error.hpp"
#include "pulse/metrics.hpp"

namespace pulse {

StackOptions stack_options(const DataConfig& data, const ModelConfig& model, int n_channels) {
  StackOptions o;
  o.chunks = data.chunks;
  o.channels = data.rows_mode ? 1 : n_channels;
  o.height_multiple = model.tile_multiple();
  o.width_multiple = model.tile_multiple();
  return o;
}

ModelConfig fit_model(ModelConfig base, const Sample& sample) {
  base.input_h = sample.input.height;
  base.input_w = sample.input.width;
  base.in_channels = sample.input.channels;
  base.out_channels = sample.input.channels;
  return base;
}

Sample supervised_sample(const RoiTraceSet& window, const TimeSeries& bvp, double hr_bpm, const DataConfig& data,
                         const StackOptions& stack) {
  const int frames = data.effective_frames();
  if (window.length < frames || static_cast<int>(bvp.size()) < frames)
    throw InputError("window shorter than the configured frame count");
  const RoiTraceSet trimmed = window.length == frames ? window : window.slice(0, frames);
  const TimeSeries bvp_trim(std::vector<double>(bvp.samples.begin(), bvp.samples.begin() + frames), bvp.fs);

  MstOptions mo;
  mo.band = data.band;
  mo.time_divisor = data.chunks;
  const auto mst = build_mstmap(trimmed, mo);
  const auto bvpmap = build_bvpmap(bvp_trim, mst.rows, data.band);

  Sample s;
  s.input = stack_square(mst, stack);
  s.rows = mst.rows;
  s.length = mst.length;
  s.target_rows.assign(bvpmap.data.begin(), bvpmap.data.end());
  s.unstack_index = std::make_shared<const std::vector<std::size_t>>(
      unstack_gather_index(s.input.layout, s.input.height, s.input.width));
  s.hr_bpm = hr_bpm;
  s.hr_label = scale_hr(hr_bpm);
  s.hr_valid = true;
  s.subject = window.subject_id;
  return s;
}

std::vector<std::pair<std::size_t, int>> window_plan(const Benchmark& bench, const std::vector<std::string>& subjects,
                                                     int frames, int stride) {
  std::vector<std::pair<std::size_t, int>> plan;
  for (const auto& id : subjects) {
    const auto it = std::find(bench.ids.begin(), bench.ids.end(), id);
    if (it == bench.ids.end()) throw InputError("unknown subject " + id);
    const auto idx = static_cast<std::size_t>(it - bench.ids.begin());
    const auto windows = window_samples(bench.subjects[idx].traces, frames, stride);
    for (int start : windows.starts) plan.emplace_back(idx, start);
  }
  return plan;
}

std::vector<Sample> supervised_samples(const Benchmark& bench, const std::vector<std::string>& subjects,
                                       const DataConfig& data, const StackOptions& stack, int stride) {
  const int frames = data.effective_frames();
  std::vector<Sample> out;
  for (const auto& [idx, start] : window_plan(bench, subjects, frames, stride)) {
    const auto& subj = bench.subjects[idx];
    const TimeSeries bvp(std::vector<double>(subj.bvp.samples.begin() + start, subj.bvp.samples.begin() + start + frames),
                         subj.bvp.fs);
    auto s = supervised_sample(subj.traces.slice(start, frames), bvp, subj.window_hr(start, frames), data, stack);
    s.subject = bench.ids[idx];
    s.start = start;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pulse
