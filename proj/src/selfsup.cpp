#include "pulse/selfsup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pulse/error.hpp"
#include "pulse/metrics.hpp"

namespace pulse {

void MaskSpec::validate() const {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask ratio must lie in (0, 1)");
  if (patch < 1) throw ConfigError("mask patch must be positive");
}

int masked_patch_count(double ratio, int n_patches) {
  if (n_patches < 1) throw InputError("no patches to mask");
  const auto k = static_cast<int>(std::lround(ratio * n_patches));
  return std::clamp(k, 1, n_patches);
}

int PatchMask::count() const { return static_cast<int>(std::count(cells.begin(), cells.end(), 1)); }

PatchMask sample_patch_mask(int rows, int cols, double ratio, std::uint64_t seed) {
  PatchMask m;
  m.rows = rows;
  m.cols = cols;
  const int n = rows * cols;
  const int k = masked_patch_count(ratio, n);
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
  }
  m.cells.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < k; ++i) m.cells[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = 1;
  return m;
}

MaskedMap mask_patches(const StackedMap& map, const MaskSpec& spec, float fill) {
  spec.validate();
  if (map.height < spec.patch || map.width < spec.patch || map.height % spec.patch != 0 ||
      map.width % spec.patch != 0)
    throw InputError("image does not tile into mask patches");
  MaskedMap out{map, sample_patch_mask(map.height / spec.patch, map.width / spec.patch, spec.ratio, spec.seed)};
  for (int h = 0; h < map.height; ++h)
    for (int w = 0; w < map.width; ++w)
      if (out.layout.masked(h / spec.patch, w / spec.patch))
        for (int c = 0; c < map.channels; ++c) out.map.at(h, w, c) = fill;
  return out;
}

std::string to_string(MaskStage s) { return s == MaskStage::Stacked ? "stacked" : "map"; }

MaskStage mask_stage_from_string(const std::string& s) {
  if (s == "stacked") return MaskStage::Stacked;
  if (s == "map") return MaskStage::Map;
  throw ConfigError("unknown mask stage '" + s + "'");
}

std::string PretextSpec::name() const {
  const std::string hr = hr_method ? to_string(*hr_method) : "none";
  const char* m = map == PretextMap::None ? "none" : (map == PretextMap::Mask ? "Mask" : "PBVP");
  return hr + "-" + m;
}

PretextSpec PretextSpec::parse(const std::string& name) {
  const auto dash = name.find('-');
  if (dash == std::string::npos) throw ConfigError("pretext name must look like CHROM-Mask");
  const std::string hr = name.substr(0, dash), m = name.substr(dash + 1);
  PretextSpec s;
  if (hr == "none")
    s.hr_method.reset();
  else
    s.hr_method = rppg_method_from_string(hr);
  if (m == "none")
    s.map = PretextMap::None;
  else if (m == "Mask")
    s.map = PretextMap::Mask;
  else if (m == "PBVP")
    s.map = PretextMap::Pbvp;
  else
    throw ConfigError("unknown pretext map '" + m + "'");
  if (s.hr_method && s.map == PretextMap::Pbvp) s.pbvp_method = *s.hr_method;
  return s;
}

nlohmann::json PretextSpec::to_json() const {
  return {{"name", name()},
          {"pbvp_method", to_string(pbvp_method)},
          {"mask_ratio", mask.ratio},
          {"mask_patch", mask.patch},
          {"mask_seed", mask.seed},
          {"mask_stage", to_string(stage)},
          {"mask_fill", mask_fill}};
}

namespace {

SignalMap trimmed_mstmap(const RoiTraceSet& window, const DataConfig& data, RoiTraceSet& trimmed) {
  const int frames = data.effective_frames();
  if (window.length < frames) throw InputError("window shorter than the configured frame count");
  trimmed = window.length == frames ? window : window.slice(0, frames);
  MstOptions mo;
  mo.band = data.band;
  mo.time_divisor = data.chunks;
  return build_mstmap(trimmed, mo);
}

void attach_rows(Sample& s, const SignalMap& target) {
  s.rows = target.rows;
  s.length = target.length;
  s.target_rows.assign(target.data.begin(), target.data.end());
  s.unstack_index = std::make_shared<const std::vector<std::size_t>>(
      unstack_gather_index(s.input.layout, s.input.height, s.input.width));
}

void attach_label(PretextSample& p, const RoiTraceSet& window, const PretextSpec& spec) {
  Sample& s = p.sample;
  s.subject = window.subject_id;
  if (!spec.hr_method) return;
  p.hr_label = pseudo_hr(window, *spec.hr_method);
  s.hr_bpm = p.hr_label.hr_bpm;
  s.hr_label = scale_hr(p.hr_label.hr_bpm);
  s.hr_valid = p.hr_label.reliable;
}

}  // namespace

PretextSample make_pretext_sample(const RoiTraceSet& window, const PretextSpec& spec, const DataConfig& data,
                                  const StackOptions& stack, std::uint64_t mask_seed) {
  RoiTraceSet trimmed;
  const auto mst = trimmed_mstmap(window, data, trimmed);
  PretextSample p;
  p.target_map = stack_square(mst, stack);
  Sample& s = p.sample;

  MaskSpec ms = spec.mask;
  ms.seed = mask_seed;
  const bool masking = spec.map == PretextMap::Mask;
  if (masking && spec.stage == MaskStage::Map) {
    ms.validate();
    const int pr = (mst.rows + ms.patch - 1) / ms.patch, pc = (mst.length + ms.patch - 1) / ms.patch;
    p.mask_layout = sample_patch_mask(pr, pc, ms.ratio, ms.seed);
    SignalMap masked = mst;
    s.masked_elements.assign(mst.data.size(), 0);
    for (int r = 0; r < mst.rows; ++r)
      for (int t = 0; t < mst.length; ++t)
        if (p.mask_layout.masked(r / ms.patch, t / ms.patch)) {
          const auto i = static_cast<std::size_t>(r) * mst.length + t;
          masked.data[i] = spec.mask_fill;
          s.masked_elements[i] = 1;
        }
    s.input = stack_square(masked, stack);
  } else if (masking) {
    auto mm = mask_patches(p.target_map, ms, spec.mask_fill);
    s.input = std::move(mm.map);
    p.mask_layout = std::move(mm.layout);
  } else {
    s.input = p.target_map;
  }

  if (spec.map == PretextMap::Pbvp) {
    const auto pbvp = build_pbvpmap(trimmed, spec.pbvp_method, data.band);
    attach_rows(s, pbvp.map);
    p.target_map = stack_square(pbvp.map, stack);
  } else if (spec.map == PretextMap::Mask) {
    attach_rows(s, mst);
  } else {
    s.unstack_index = std::make_shared<const std::vector<std::size_t>>(
        unstack_gather_index(s.input.layout, s.input.height, s.input.width));
    s.rows = mst.rows;
    s.length = mst.length;
  }

  if (masking && spec.stage == MaskStage::Stacked) {
    const auto& idx = *s.unstack_index;
    s.masked_elements.assign(idx.size(), 0);
    const auto ch = static_cast<std::size_t>(s.input.channels), width = static_cast<std::size_t>(s.input.width);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t pixel = idx[i] / ch;
      const int h = static_cast<int>(pixel / width), w = static_cast<int>(pixel % width);
      s.masked_elements[i] = p.mask_layout.masked(h / ms.patch, w / ms.patch) ? 1 : 0;
    }
  }
  attach_label(p, trimmed, spec);
  return p;
}

PretextSample make_pbvp_sample(const RoiTraceSet& window, const PretextSpec& spec, const DataConfig& data,
                               const StackOptions& stack) {
  PretextSpec s = spec;
  s.map = PretextMap::Pbvp;
  return make_pretext_sample(window, s, data, stack, 0);
}

std::vector<PretextSample> pretext_samples(const Benchmark& pool, const PretextSpec& spec, const DataConfig& data,
                                           const StackOptions& stack, int stride) {
  const int frames = data.effective_frames();
  std::vector<PretextSample> out;
  std::uint64_t k = 0;
  for (const auto& [idx, start] : window_plan(pool, pool.ids, frames, stride)) {
    auto window = pool.subjects[idx].traces.slice(start, frames);
    window.subject_id = pool.ids[idx];
    auto p = make_pretext_sample(window, spec, data, stack, mix_seed(spec.mask.seed ^ mix_seed(k++)));
    p.sample.start = start;
    out.push_back(std::move(p));
  }
  return out;
}

PretrainResult pretrain(const Benchmark& pool, const PretextSpec& spec, const ExperimentConfig& exp_in,
                        const std::filesystem::path& checkpoint) {
  const ExperimentConfig exp = exp_in.resolved();
  if (pool.subjects.empty()) throw InputError("pretraining pool is empty");
  const auto stack = stack_options(exp.data, exp.model, pool.subjects.front().traces.n_channels);
  const auto pretext = pretext_samples(pool, spec, exp.data, stack, exp.train.stride);
  if (pretext.empty()) throw InputError("pretraining pool has no windows");
  std::vector<Sample> samples;
  samples.reserve(pretext.size());
  for (const auto& p : pretext) samples.push_back(p.sample);

  SwinUnet model(variant_config(fit_model(exp.model, samples.front()), exp.variant));
  PretrainResult out;
  auto& r = out.report;
  r.kind = "pretrain";
  r.config = exp.to_json();
  r.config["pretext"] = spec.to_json();
  r.run_id = run_id_for(r.config);
  const auto log = train_model(model, samples, exp.train);
  r.curve = log.curve;
  if (!checkpoint.empty()) {
    if (checkpoint.has_parent_path()) std::filesystem::create_directories(checkpoint.parent_path());
    save_checkpoint(checkpoint, model.params(), checkpoint_config(model, exp, r.run_id));
    r.checkpoint = checkpoint.string();
    out.checkpoint = checkpoint;
  }
  return out;
}

namespace {

std::string parent_of(const std::filesystem::path& checkpoint, const std::string& given) {
  if (!given.empty()) return given;
  return read_checkpoint_config(checkpoint).value("run_id", std::string());
}

}  // namespace

RunReport linear_probe(const std::filesystem::path& checkpoint, const Benchmark& bench, const ExperimentConfig& exp,
                       const std::string& parent_run_id) {
  return cross_validate(bench, exp, {checkpoint, true, parent_of(checkpoint, parent_run_id)}, {}, "probe");
}

RunReport transfer(const std::filesystem::path& checkpoint, const Benchmark& bench, const ExperimentConfig& exp,
                   const std::string& parent_run_id) {
  return cross_validate(bench, exp, {checkpoint, false, parent_of(checkpoint, parent_run_id)}, {}, "transfer");
}

}  // namespace pulse
