#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace pulse::ag {

struct Node {
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<int> shape;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  std::size_t size() const { return value.size(); }
  /// Allocates the gradient buffer on first use.
  std::vector<double>& grad_buffer();
};

using NodePtr = std::shared_ptr<Node>;

/// Handle to a node of the computation graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(std::vector<int> shape, std::vector<double> values);
  static Tensor leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad);

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Back-propagates the given output gradients through every reachable node.
/// Gradients accumulate into leaves.
void backward(std::span<const std::pair<Tensor, std::vector<double>>> seeds);
/// Convenience for a scalar root with seed 1.
void backward(const Tensor& scalar);

// Ops on row-major 2-D tensors [rows, cols] unless noted.

/// x [N, in] * w [in, out] (+ b [out]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b = nullptr);
Tensor add(const Tensor& a, const Tensor& b);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// out[i] = x[index[i]]; index -1 yields 0. Backward scatter-adds.
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::int64_t>> index, std::vector<int> shape);
/// Same values under a new shape of equal size.
Tensor reshape(const Tensor& x, std::vector<int> shape);
/// Concatenates along the last dimension.
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Adaptive average pooling of [L, C] over L into [bins, C].
Tensor adaptive_avg_pool(const Tensor& x, int bins);

/// Static description of a windowed attention layer's token geometry.
struct AttentionLayout {
  int windows = 1;       ///< number of windows; tokens are window-major
  int tokens = 1;        ///< tokens per window
  int heads = 1;
  double scale = 1.0;
  /// tokens x tokens indices into the relative bias table's rows.
  std::shared_ptr<const std::vector<int>> bias_index;
  /// Optional windows x tokens x tokens mask; 0 excludes the pair.
  std::shared_ptr<const std::vector<std::uint8_t>> allowed;
};

/// Multi-head scaled dot-product attention within windows.
/// qkv [windows * tokens, 3C] -> [windows * tokens, C]. `bias_table` is
/// [table_rows, heads].
Tensor window_attention(const Tensor& qkv, const Tensor& bias_table, const AttentionLayout& layout);

/// Attention probabilities [windows, heads, tokens, tokens] for inspection.
std::vector<double> attention_probabilities(std::span<const double> qkv, std::span<const double> bias_table,
                                            const AttentionLayout& layout);

}  // namespace pulse::ag
