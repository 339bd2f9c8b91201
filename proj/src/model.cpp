#include "pulse/model.hpp"

#include <algorithm>
#include <cmath>

#include "pulse/error.hpp"

namespace pulse {

using ag::Tensor;
using IndexPtr = std::shared_ptr<const std::vector<std::int64_t>>;

// ---------------------------------------------------------------------------
// Config

bool ModelConfig::extent_ok(int extent) const {
  if (extent <= 0 || patch_size <= 0 || extent % patch_size != 0) return false;
  int g = extent / patch_size;
  for (int s = 0; s < stages(); ++s) {
    if (s > 0) {
      if (g % 2 != 0) return false;
      g /= 2;
    }
    if (g < 1) return false;
    if (g % std::min(window_size, g) != 0) return false;
  }
  return true;
}

int ModelConfig::padded_extent(int extent) const {
  for (int e = std::max(extent, 1); e < extent + 4096; ++e)
    if (extent_ok(e)) return e;
  throw ConfigError("no valid padded extent near " + std::to_string(extent));
}

void ModelConfig::validate() const {
  if (depths.empty()) throw ConfigError("model needs at least one stage");
  if (heads.size() != depths.size()) throw ConfigError("heads and depths differ in length");
  if (in_channels < 1 || out_channels < 1 || embed_dim < 1 || window_size < 1 || patch_size < 1)
    throw ConfigError("model dimensions must be positive");
  if (!extent_ok(input_h) || !extent_ok(input_w))
    throw ConfigError("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                      " does not tile into patches and windows");
  for (int s = 0; s < stages(); ++s) {
    if (depths[static_cast<std::size_t>(s)] < 1) throw ConfigError("stage depth must be positive");
    const int h = heads[static_cast<std::size_t>(s)];
    if (h < 1 || (embed_dim << s) % h != 0) throw ConfigError("stage width not divisible by head count");
  }
  if (!(mlp_ratio > 0.0)) throw ConfigError("mlp_ratio must be positive");
  if (!hr_head && !decoder) throw ConfigError("model needs a decoder or an HR head");
  if (hr_head) {
    const int hs = head_stage < 0 ? stages() - 1 : head_stage;
    if (hs >= stages()) throw ConfigError("head_stage out of range");
    const int div = patch_size << hs;
    if ((input_h / div) * (input_w / div) < head_kernel) throw ConfigError("too few tokens for the HR head kernel");
    if (head_channels < 1 || head_kernel < 1 || head_bins < 1) throw ConfigError("HR head sizes must be positive");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"input_h", input_h},
          {"input_w", input_w},
          {"in_channels", in_channels},
          {"out_channels", out_channels},
          {"patch_size", patch_size},
          {"window_size", window_size},
          {"embed_dim", embed_dim},
          {"depths", depths},
          {"heads", heads},
          {"mlp_ratio", mlp_ratio},
          {"shift", shift},
          {"hr_head", hr_head},
          {"decoder", decoder},
          {"decoder_sigmoid", decoder_sigmoid},
          {"head_stage", head_stage},
          {"head_channels", head_channels},
          {"head_kernel", head_kernel},
          {"head_bins", head_bins},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.input_h = j.value("input_h", c.input_h);
    c.input_w = j.value("input_w", c.input_w);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.window_size = j.value("window_size", c.window_size);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.depths = j.value("depths", c.depths);
    c.heads = j.value("heads", c.heads);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.shift = j.value("shift", c.shift);
    c.hr_head = j.value("hr_head", c.hr_head);
    c.decoder = j.value("decoder", c.decoder);
    c.decoder_sigmoid = j.value("decoder_sigmoid", c.decoder_sigmoid);
    c.head_stage = j.value("head_stage", c.head_stage);
    c.head_channels = j.value("head_channels", c.head_channels);
    c.head_kernel = j.value("head_kernel", c.head_kernel);
    c.head_bins = j.value("head_bins", c.head_bins);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Full: return "full";
    case ModelVariant::NoHrHead: return "no_hr_head";
    case ModelVariant::NoDecoder: return "no_decoder";
    case ModelVariant::Unstacked: return "unstacked";
  }
  return "full";
}

ModelVariant model_variant_from_string(const std::string& s) {
  for (auto v : {ModelVariant::Full, ModelVariant::NoHrHead, ModelVariant::NoDecoder, ModelVariant::Unstacked})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown model variant " + s);
}

ModelConfig variant_config(ModelConfig base, ModelVariant v) {
  switch (v) {
    case ModelVariant::NoHrHead: base.hr_head = false; break;
    case ModelVariant::NoDecoder: base.decoder = false; break;
    case ModelVariant::Full:
    case ModelVariant::Unstacked: break;
  }
  return base;
}

// ---------------------------------------------------------------------------
// Layers

namespace layers {

std::vector<double> Init::trunc_normal(std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) {
    double z = dist(rng_);
    while (std::abs(z) > 2.0) z = dist(rng_);
    v = 0.02 * z;
  }
  return out;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, bool bias, Init& init)
    : has_bias(bias) {
  w = store.add(name + ".weight", {in, out}, init.trunc_normal(static_cast<std::size_t>(in) * out));
  if (bias) b = store.add(name + ".bias", {out}, Init::zeros(static_cast<std::size_t>(out)));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim) {
  gamma = store.add(name + ".gamma", {dim}, Init::ones(static_cast<std::size_t>(dim)));
  beta = store.add(name + ".beta", {dim}, Init::zeros(static_cast<std::size_t>(dim)));
}

PatchEmbed::PatchEmbed(ParameterStore& store, const std::string& name, int h, int w, int channels, int patch,
                       int dim, Init& init)
    : grid_{h / patch, w / patch}, patch_dim_(patch * patch * channels) {
  if (h % patch != 0 || w % patch != 0) throw ConfigError("image not divisible by patch size");
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(grid_.tokens()) * patch_dim_);
  for (int gy = 0; gy < grid_.h; ++gy)
    for (int gx = 0; gx < grid_.w; ++gx)
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < channels; ++c) {
            const std::int64_t y = gy * patch + py, x = gx * patch + px;
            idx->push_back((y * w + x) * channels + c);
          }
  index_ = idx;
  proj_ = Linear(store, name + ".proj", patch_dim_, dim, true, init);
  norm_ = LayerNorm(store, name + ".norm", dim);
}

Tensor PatchEmbed::operator()(const Tensor& image) const {
  return norm_(proj_(ag::gather(image, index_, {grid_.tokens(), patch_dim_})));
}

SwinBlock::SwinBlock(ParameterStore& store, const std::string& name, Grid grid, int dim, int heads, int window,
                     bool shifted, double mlp_ratio, Init& init)
    : grid_(grid), dim_(dim) {
  const int wh = std::min(window, grid.h), ww = std::min(window, grid.w);
  if (grid.h % wh != 0 || grid.w % ww != 0) throw ConfigError("token grid not divisible by window");
  if (dim % heads != 0) throw ConfigError("width not divisible by heads");
  if (shifted) {
    shift_h_ = grid.h > wh ? wh / 2 : 0;
    shift_w_ = grid.w > ww ? ww / 2 : 0;
  }
  const int nwh = grid.h / wh, nww = grid.w / ww, tokens = wh * ww;
  const int windows = nwh * nww;
  const int n = grid.tokens();

  partition_.resize(static_cast<std::size_t>(n));
  std::vector<int> label(static_cast<std::size_t>(n));
  auto region = [](int r, int extent, int win, int shift) {
    if (shift == 0 || r < extent - win) return 0;
    return r < extent - shift ? 1 : 2;
  };
  for (int wy = 0; wy < nwh; ++wy)
    for (int wx = 0; wx < nww; ++wx)
      for (int iy = 0; iy < wh; ++iy)
        for (int ix = 0; ix < ww; ++ix) {
          const int ry = wy * wh + iy, rx = wx * ww + ix;
          const int pos = (wy * nww + wx) * tokens + iy * ww + ix;
          const int sy = (ry + shift_h_) % grid.h, sx = (rx + shift_w_) % grid.w;
          partition_[static_cast<std::size_t>(pos)] = sy * grid.w + sx;
          label[static_cast<std::size_t>(pos)] = region(ry, grid.h, wh, shift_h_) * 3 + region(rx, grid.w, ww, shift_w_);
        }

  auto to = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n) * dim);
  auto from = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n) * dim);
  for (int p = 0; p < n; ++p) {
    const int g = partition_[static_cast<std::size_t>(p)];
    for (int c = 0; c < dim; ++c) {
      (*to)[static_cast<std::size_t>(p) * dim + c] = static_cast<std::int64_t>(g) * dim + c;
      (*from)[static_cast<std::size_t>(g) * dim + c] = static_cast<std::int64_t>(p) * dim + c;
    }
  }
  to_windows_ = to;
  from_windows_ = from;

  auto bias_index = std::make_shared<std::vector<int>>(static_cast<std::size_t>(tokens) * tokens);
  for (int i = 0; i < tokens; ++i)
    for (int j = 0; j < tokens; ++j) {
      const int dy = i / ww - j / ww + wh - 1;
      const int dx = i % ww - j % ww + ww - 1;
      (*bias_index)[static_cast<std::size_t>(i) * tokens + j] = dy * (2 * ww - 1) + dx;
    }
  layout_.windows = windows;
  layout_.tokens = tokens;
  layout_.heads = heads;
  layout_.scale = 1.0 / std::sqrt(static_cast<double>(dim / heads));
  layout_.bias_index = bias_index;
  if (shift_h_ > 0 || shift_w_ > 0) {
    auto allowed = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(windows) * tokens * tokens);
    for (int w = 0; w < windows; ++w)
      for (int i = 0; i < tokens; ++i)
        for (int j = 0; j < tokens; ++j)
          (*allowed)[(static_cast<std::size_t>(w) * tokens + i) * tokens + j] =
              label[static_cast<std::size_t>(w * tokens + i)] == label[static_cast<std::size_t>(w * tokens + j)];
    layout_.allowed = allowed;
  }

  norm1_ = LayerNorm(store, name + ".norm1", dim);
  qkv_ = Linear(store, name + ".qkv", dim, 3 * dim, true, init);
  bias_table_ = store.add(name + ".rel_bias", {(2 * wh - 1) * (2 * ww - 1), heads},
                          init.trunc_normal(static_cast<std::size_t>((2 * wh - 1) * (2 * ww - 1) * heads)));
  proj_ = Linear(store, name + ".proj", dim, dim, true, init);
  norm2_ = LayerNorm(store, name + ".norm2", dim);
  const int hidden = std::max(1, static_cast<int>(std::lround(dim * mlp_ratio)));
  fc1_ = Linear(store, name + ".fc1", dim, hidden, true, init);
  fc2_ = Linear(store, name + ".fc2", hidden, dim, true, init);
}

Tensor SwinBlock::attention(const Tensor& x) const {
  const int n = grid_.tokens();
  const Tensor windows = ag::gather(x, to_windows_, {n, dim_});
  const Tensor attended = proj_(ag::window_attention(qkv_(windows), bias_table_, layout_));
  return ag::gather(attended, from_windows_, {n, dim_});
}

Tensor SwinBlock::operator()(const Tensor& x) const {
  const Tensor h = ag::add(x, attention(norm1_(x)));
  return ag::add(h, fc2_(ag::gelu(fc1_(norm2_(h)))));
}

PatchMerge::PatchMerge(ParameterStore& store, const std::string& name, Grid grid, int dim, Init& init)
    : grid_(grid), dim_(dim) {
  if (grid.h % 2 != 0 || grid.w % 2 != 0) throw ConfigError("patch merging needs an even grid");
  const Grid out = out_grid();
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(out.tokens()) * 4 * dim);
  constexpr int kOffsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (int oy = 0; oy < out.h; ++oy)
    for (int ox = 0; ox < out.w; ++ox)
      for (const auto& off : kOffsets)
        for (int c = 0; c < dim; ++c) {
          const std::int64_t y = 2 * oy + off[0], x = 2 * ox + off[1];
          idx->push_back((y * grid.w + x) * dim + c);
        }
  index_ = idx;
  norm_ = LayerNorm(store, name + ".norm", 4 * dim);
  reduce_ = Linear(store, name + ".reduce", 4 * dim, 2 * dim, false, init);
}

Tensor PatchMerge::operator()(const Tensor& x) const {
  return reduce_(norm_(ag::gather(x, index_, {out_grid().tokens(), 4 * dim_})));
}

PatchExpand::PatchExpand(ParameterStore& store, const std::string& name, Grid grid, int dim, int factor,
                         int out_dim, Init& init)
    : grid_(grid), factor_(factor), out_dim_(out_dim) {
  const Grid out = out_grid();
  const int feat = factor * factor * out_dim;
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(out.tokens()) * out_dim);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      const std::int64_t token = static_cast<std::int64_t>(y / factor) * grid.w + x / factor;
      const std::int64_t sub = (y % factor) * factor + x % factor;
      for (int c = 0; c < out_dim; ++c) idx->push_back(token * feat + sub * out_dim + c);
    }
  index_ = idx;
  expand_ = Linear(store, name + ".expand", dim, feat, false, init);
  norm_ = LayerNorm(store, name + ".norm", out_dim);
}

Tensor PatchExpand::operator()(const Tensor& x) const {
  return norm_(ag::gather(expand_(x), index_, {out_grid().tokens(), out_dim_}));
}

HrHead::HrHead(ParameterStore& store, const std::string& name, int dim, int channels, int kernel, int bins,
               Init& init)
    : dim_(dim), channels_(channels), kernel_(kernel), bins_(bins) {
  conv_ = Linear(store, name + ".conv", kernel * dim, channels, true, init);
  fc_ = Linear(store, name + ".fc", bins * channels, 1, true, init);
  fc_name_ = name + ".fc";
}

Tensor HrHead::operator()(const Tensor& tokens) const {
  const int len = tokens.dim(0);
  if (len < kernel_) throw ConfigError("HR head needs at least kernel tokens");
  const int out_len = len - kernel_ + 1;
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(static_cast<std::size_t>(out_len) * kernel_ * dim_);
  for (int l = 0; l < out_len; ++l)
    for (int j = 0; j < kernel_; ++j)
      for (int c = 0; c < dim_; ++c) idx->push_back(static_cast<std::int64_t>(l + j) * dim_ + c);
  const Tensor cols = ag::gather(tokens, idx, {out_len, kernel_ * dim_});
  const Tensor pooled = ag::adaptive_avg_pool(ag::relu(conv_(cols)), bins_);
  return fc_(ag::reshape(pooled, {1, bins_ * channels_}));
}

}  // namespace layers

// ---------------------------------------------------------------------------
// Network

SwinUnet::SwinUnet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  layers::Init init(config_.seed);
  const int c0 = config_.embed_dim;
  const int stages = config_.stages();
  embed_ = layers::PatchEmbed(params_, "embed", config_.input_h, config_.input_w, config_.in_channels,
                              config_.patch_size, c0, init);
  std::vector<Grid> grids;
  Grid grid = embed_.grid();
  for (int s = 0; s < stages; ++s) {
    grids.push_back(grid);
    const int dim = c0 << s;
    std::vector<layers::SwinBlock> blocks;
    for (int b = 0; b < config_.depths[static_cast<std::size_t>(s)]; ++b)
      blocks.emplace_back(params_, "enc" + std::to_string(s) + ".block" + std::to_string(b), grid, dim,
                          config_.heads[static_cast<std::size_t>(s)], config_.window_size,
                          config_.shift && b % 2 == 1, config_.mlp_ratio, init);
    encoder_.push_back(std::move(blocks));
    if (s + 1 < stages) {
      merges_.emplace_back(params_, "enc" + std::to_string(s) + ".merge", grid, dim, init);
      grid = merges_.back().out_grid();
    }
  }
  if (config_.decoder) {
    bottleneck_norm_ = layers::LayerNorm(params_, "bottleneck.norm", c0 << (stages - 1));
    for (int s = stages - 2; s >= 0; --s) {
      const int dim = c0 << s;
      const std::string prefix = "dec" + std::to_string(s);
      expands_.emplace_back(params_, prefix + ".expand", grids[static_cast<std::size_t>(s + 1)], 2 * dim, 2, dim,
                            init);
      skip_proj_.emplace_back(params_, prefix + ".skip", 2 * dim, dim, true, init);
      std::vector<layers::SwinBlock> blocks;
      for (int b = 0; b < config_.depths[static_cast<std::size_t>(s)]; ++b)
        blocks.emplace_back(params_, prefix + ".block" + std::to_string(b), grids[static_cast<std::size_t>(s)], dim,
                            config_.heads[static_cast<std::size_t>(s)], config_.window_size,
                            config_.shift && b % 2 == 1, config_.mlp_ratio, init);
      decoder_.push_back(std::move(blocks));
    }
    final_norm_ = layers::LayerNorm(params_, "final.norm", c0);
    final_expand_ = layers::PatchExpand(params_, "final.expand", grids[0], c0, config_.patch_size, c0, init);
    output_ = layers::Linear(params_, "final.out", c0, config_.out_channels, true, init);
  }
  if (config_.hr_head) {
    const int hs = config_.head_stage < 0 ? stages - 1 : config_.head_stage;
    head_ = layers::HrHead(params_, "head", c0 << hs, config_.head_channels, config_.head_kernel, config_.head_bins,
                           init);
  }
}

std::vector<std::string> SwinUnet::final_layer_names() const {
  if (!config_.hr_head) throw ConfigError("model has no HR head");
  return {head_.fc_name() + ".weight", head_.fc_name() + ".bias"};
}

ModelOutput SwinUnet::forward(std::span<const float> image) const {
  std::vector<double> values(image.begin(), image.end());
  return forward(std::span<const double>(values));
}

ModelOutput SwinUnet::forward(std::span<const double> image) const {
  const auto expected = static_cast<std::size_t>(config_.input_h) * config_.input_w * config_.in_channels;
  if (image.size() != expected) throw ConfigError("input image does not match the model's input shape");
  return forward_tensor(ag::Tensor::constant({config_.input_h * config_.input_w, config_.in_channels},
                                             std::vector<double>(image.begin(), image.end())));
}

ModelOutput SwinUnet::forward(const StackedMap& map) const {
  if (map.height != config_.input_h || map.width != config_.input_w || map.channels != config_.in_channels)
    throw ConfigError("stacked map does not match the model's input shape");
  return forward(std::span<const float>(map.image));
}

ModelOutput SwinUnet::forward_tensor(const Tensor& image) const {
  const int stages = config_.stages();
  Tensor x = embed_(image);
  std::vector<Tensor> skips;
  for (int s = 0; s < stages; ++s) {
    for (const auto& block : encoder_[static_cast<std::size_t>(s)]) x = block(x);
    skips.push_back(x);
    if (s + 1 < stages) x = merges_[static_cast<std::size_t>(s)](x);
  }
  ModelOutput out;
  out.bottleneck = x;
  if (config_.hr_head) {
    const int hs = config_.head_stage < 0 ? stages - 1 : config_.head_stage;
    out.hr = head_(skips[static_cast<std::size_t>(hs)]);
  }
  if (config_.decoder) {
    x = bottleneck_norm_(x);
    for (std::size_t i = 0; i < expands_.size(); ++i) {
      const auto s = static_cast<std::size_t>(stages - 2) - i;
      x = skip_proj_[i](ag::concat_cols(expands_[i](x), skips[s]));
      for (const auto& block : decoder_[i]) x = block(x);
    }
    x = output_(final_expand_(final_norm_(x)));
    out.map = config_.decoder_sigmoid ? ag::sigmoid(x) : x;
  }
  return out;
}

}  // namespace pulse
