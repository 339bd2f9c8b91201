#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/autograd.hpp"
#include "pulse/mstmap.hpp"
#include "pulse/params.hpp"

namespace pulse {

struct ModelConfig {
  int input_h = 192;
  int input_w = 192;
  int in_channels = 6;
  int out_channels = 6;
  int patch_size = 4;
  int window_size = 4;
  int embed_dim = 24;
  std::vector<int> depths{2, 2, 2};
  std::vector<int> heads{2, 4, 8};
  double mlp_ratio = 4.0;
  bool shift = true;
  bool hr_head = true;
  bool decoder = true;
  bool decoder_sigmoid = false;
  /// Encoder stage feeding the HR head; -1 is the bottleneck.
  int head_stage = -1;
  int head_channels = 32;
  int head_kernel = 3;
  int head_bins = 1;
  std::uint64_t seed = 0;

  int stages() const { return static_cast<int>(depths.size()); }
  /// Throws ConfigError when shapes cannot be tiled.
  void validate() const;
  /// Whether an input extent tiles into patches and windows at every stage.
  bool extent_ok(int extent) const;
  /// Smallest extent >= `extent` that tiles.
  int padded_extent(int extent) const;
  /// A multiple that always tiles: patch * 2^(stages-1) * window.
  int tile_multiple() const { return (patch_size << (stages() - 1)) * window_size; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

enum class ModelVariant { Full, NoHrHead, NoDecoder, Unstacked };

std::string to_string(ModelVariant v);
ModelVariant model_variant_from_string(const std::string& s);
ModelConfig variant_config(ModelConfig base, ModelVariant v);

struct ModelOutput {
  /// [H * W, out_channels], i.e. an HWC image. Undefined without a decoder.
  ag::Tensor map;
  /// [1, 1] HR in label scale. Undefined without an HR head.
  ag::Tensor hr;
  ag::Tensor bottleneck;
  bool has_map() const { return map.defined(); }
  bool has_hr() const { return hr.defined(); }
};

/// Token grid extent.
struct Grid {
  int h = 0;
  int w = 0;
  int tokens() const { return h * w; }
};

namespace layers {

class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}
  /// Normal(0, 0.02) truncated at two standard deviations.
  std::vector<double> trunc_normal(std::size_t n);
  static std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }
  static std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

 private:
  std::mt19937_64 rng_;
};

struct Linear {
  ag::Tensor w, b;
  bool has_bias = true;
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, bool bias, Init& init);
  ag::Tensor operator()(const ag::Tensor& x) const { return ag::linear(x, w, has_bias ? &b : nullptr); }
};

struct LayerNorm {
  ag::Tensor gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim);
  ag::Tensor operator()(const ag::Tensor& x) const { return ag::layer_norm(x, gamma, beta); }
};

/// Non-overlapping patch x patch pixel blocks linearly embedded, then
/// normalized. Tokens are row-major over the patch grid.
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(ParameterStore& store, const std::string& name, int h, int w, int channels, int patch, int dim,
             Init& init);
  /// image [H * W, C] (HWC) -> tokens [grid, dim].
  ag::Tensor operator()(const ag::Tensor& image) const;
  Grid grid() const { return grid_; }

 private:
  Grid grid_;
  int patch_dim_ = 0;
  std::shared_ptr<const std::vector<std::int64_t>> index_;
  Linear proj_;
  LayerNorm norm_;
};

/// Window / shifted-window multi-head self-attention block with MLP.
class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(ParameterStore& store, const std::string& name, Grid grid, int dim, int heads, int window, bool shifted,
            double mlp_ratio, Init& init);
  ag::Tensor operator()(const ag::Tensor& x) const;
  /// The attention branch alone (no norm, residual or MLP) on raw tokens.
  ag::Tensor attention(const ag::Tensor& x) const;
  const ag::AttentionLayout& layout() const { return layout_; }
  int shift_h() const { return shift_h_; }
  int shift_w() const { return shift_w_; }
  /// Grid token held at each window-major position.
  const std::vector<int>& partition() const { return partition_; }
  const ag::Tensor& bias_table() const { return bias_table_; }
  const Linear& qkv() const { return qkv_; }

 private:
  Grid grid_;
  int dim_ = 0;
  int shift_h_ = 0, shift_w_ = 0;
  std::vector<int> partition_;
  std::shared_ptr<const std::vector<std::int64_t>> to_windows_, from_windows_;
  ag::AttentionLayout layout_;
  LayerNorm norm1_, norm2_;
  Linear qkv_, proj_, fc1_, fc2_;
  ag::Tensor bias_table_;
};

/// 2x2 neighbourhood concatenation (order (0,0), (1,0), (0,1), (1,1)),
/// normalized and projected from 4C to 2C.
class PatchMerge {
 public:
  PatchMerge() = default;
  PatchMerge(ParameterStore& store, const std::string& name, Grid grid, int dim, Init& init);
  ag::Tensor operator()(const ag::Tensor& x) const;
  Grid out_grid() const { return {grid_.h / 2, grid_.w / 2}; }

 private:
  Grid grid_;
  int dim_ = 0;
  std::shared_ptr<const std::vector<std::int64_t>> index_;
  LayerNorm norm_;
  Linear reduce_;
};

/// Linear expansion of every token into factor x factor tokens of
/// `out_dim` channels, then normalization.
class PatchExpand {
 public:
  PatchExpand() = default;
  PatchExpand(ParameterStore& store, const std::string& name, Grid grid, int dim, int factor, int out_dim,
              Init& init);
  ag::Tensor operator()(const ag::Tensor& x) const;
  Grid out_grid() const { return {grid_.h * factor_, grid_.w * factor_}; }

 private:
  Grid grid_;
  int factor_ = 2;
  int out_dim_ = 0;
  std::shared_ptr<const std::vector<std::int64_t>> index_;
  Linear expand_;
  LayerNorm norm_;
};

/// Conv1d (valid) -> ReLU -> adaptive average pool -> fully connected.
class HrHead {
 public:
  HrHead() = default;
  HrHead(ParameterStore& store, const std::string& name, int dim, int channels, int kernel, int bins, Init& init);
  /// tokens [L, dim] with L >= kernel -> [1, 1].
  ag::Tensor operator()(const ag::Tensor& tokens) const;
  const std::string& fc_name() const { return fc_name_; }

 private:
  int dim_ = 0, channels_ = 0, kernel_ = 3, bins_ = 1;
  Linear conv_, fc_;
  std::string fc_name_;
};

}  // namespace layers

/// Swin-style U-shaped encoder/decoder with an HR regression head.
class SwinUnet {
 public:
  explicit SwinUnet(ModelConfig config);
  // Layers hold handles to the store's tensors, so copies would alias.
  SwinUnet(const SwinUnet&) = delete;
  SwinUnet& operator=(const SwinUnet&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// image: H * W * C floats in HWC order.
  ModelOutput forward(std::span<const float> image) const;
  ModelOutput forward(std::span<const double> image) const;
  ModelOutput forward(const StackedMap& map) const;

  /// Parameter names of the HR head's final fully-connected layer.
  std::vector<std::string> final_layer_names() const;

  const layers::PatchEmbed& embed() const { return embed_; }
  const std::vector<std::vector<layers::SwinBlock>>& encoder_blocks() const { return encoder_; }

 private:
  ModelOutput forward_tensor(const ag::Tensor& image) const;

  ModelConfig config_;
  ParameterStore params_;
  layers::PatchEmbed embed_;
  std::vector<std::vector<layers::SwinBlock>> encoder_;
  std::vector<layers::PatchMerge> merges_;
  layers::LayerNorm bottleneck_norm_;
  std::vector<layers::PatchExpand> expands_;
  std::vector<layers::Linear> skip_proj_;
  std::vector<std::vector<layers::SwinBlock>> decoder_;
  layers::LayerNorm final_norm_;
  layers::PatchExpand final_expand_;
  layers::Linear output_;
  layers::HrHead head_;
};

}  // namespace pulse
