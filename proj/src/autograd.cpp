#include "pulse/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

#include "pulse/error.hpp"

namespace pulse::ag {

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<Node>();
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  if (n != values.size()) throw ConfigError("tensor shape does not match value count");
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

namespace {

NodePtr make_node(std::vector<int> shape, std::vector<NodePtr> inputs) {
  auto node = std::make_shared<Node>();
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  node->shape = std::move(shape);
  node->value.assign(n, 0.0);
  node->requires_grad = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& p) { return p->requires_grad; });
  node->inputs = std::move(inputs);
  return node;
}

void require(bool cond, const char* what) {
  if (!cond) throw ConfigError(what);
}

int rows_of(const Tensor& t) { return t.shape().size() == 1 ? 1 : t.dim(0); }
int cols_of(const Tensor& t) { return t.shape().back(); }

}  // namespace

void backward(std::span<const std::pair<Tensor, std::vector<double>>> seeds) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  for (const auto& [t, g] : seeds) {
    Node* root = t.node().get();
    if (!root->requires_grad) continue;
    auto& buf = root->grad_buffer();
    if (g.size() != buf.size()) throw ConfigError("seed gradient size mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
    if (visited.insert(root).second) stack.emplace_back(root, 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].get();
        if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

void backward(const Tensor& scalar) {
  std::vector<std::pair<Tensor, std::vector<double>>> seeds{{scalar, std::vector<double>(scalar.size(), 1.0)}};
  backward(seeds);
}

// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
  const int n = rows_of(x), in = cols_of(x);
  require(w.shape().size() == 2 && w.dim(0) == in, "linear: weight shape mismatch");
  const int out = w.dim(1);
  if (b) require(static_cast<int>(b->size()) == out, "linear: bias shape mismatch");

  std::vector<NodePtr> inputs{x.node(), w.node()};
  if (b) inputs.push_back(b->node());
  auto node = make_node({n, out}, inputs);
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  double* yv = node->value.data();
  for (int i = 0; i < n; ++i) {
    double* yrow = yv + static_cast<std::size_t>(i) * out;
    if (b) std::copy(b->value().begin(), b->value().end(), yrow);
    const double* xrow = xv + static_cast<std::size_t>(i) * in;
    for (int k = 0; k < in; ++k) {
      const double a = xrow[k];
      const double* wrow = wv + static_cast<std::size_t>(k) * out;
      for (int j = 0; j < out; ++j) yrow[j] += a * wrow[j];
    }
  }
  const bool has_bias = b != nullptr;
  node->backward = [n, in, out, has_bias](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    const double* gy = self.grad.data();
    if (xn.requires_grad) {
      auto& gx = xn.grad_buffer();
      for (int i = 0; i < n; ++i) {
        const double* grow = gy + static_cast<std::size_t>(i) * out;
        for (int k = 0; k < in; ++k) {
          const double* wrow = wn.value.data() + static_cast<std::size_t>(k) * out;
          double acc = 0.0;
          for (int j = 0; j < out; ++j) acc += grow[j] * wrow[j];
          gx[static_cast<std::size_t>(i) * in + k] += acc;
        }
      }
    }
    if (wn.requires_grad) {
      auto& gw = wn.grad_buffer();
      for (int i = 0; i < n; ++i) {
        const double* grow = gy + static_cast<std::size_t>(i) * out;
        const double* xrow = xn.value.data() + static_cast<std::size_t>(i) * in;
        for (int k = 0; k < in; ++k) {
          const double a = xrow[k];
          double* gwrow = gw.data() + static_cast<std::size_t>(k) * out;
          for (int j = 0; j < out; ++j) gwrow[j] += a * grow[j];
        }
      }
    }
    if (has_bias && self.inputs[2]->requires_grad) {
      auto& gb = self.inputs[2]->grad_buffer();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) gb[j] += gy[static_cast<std::size_t>(i) * out + j];
    }
  };
  return Tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "add: size mismatch");
  auto node = make_node(a.shape(), {a.node(), b.node()});
  for (std::size_t i = 0; i < a.size(); ++i) node->value[i] = a.value()[i] + b.value()[i];
  node->backward = [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  };
  return Tensor(node);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int n = rows_of(x), c = cols_of(x);
  require(static_cast<int>(gamma.size()) == c && static_cast<int>(beta.size()) == c, "layer_norm: shape mismatch");
  auto node = make_node(x.shape(), {x.node(), gamma.node(), beta.node()});
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  const double* xv = x.value().data();
  for (int i = 0; i < n; ++i) {
    const double* row = xv + static_cast<std::size_t>(i) * c;
    double m = 0.0;
    for (int j = 0; j < c; ++j) m += row[j];
    m /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - m) * (row[j] - m);
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < c; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * c + j;
      (*xhat)[idx] = (row[j] - m) * is;
      node->value[idx] = (*xhat)[idx] * gamma.value()[j] + beta.value()[j];
    }
  }
  node->backward = [n, c, xhat, inv_std](Node& self) {
    Node& xn = *self.inputs[0];
    Node& gn = *self.inputs[1];
    Node& bn = *self.inputs[2];
    const double* gy = self.grad.data();
    if (gn.requires_grad || bn.requires_grad) {
      auto& gg = gn.grad_buffer();
      auto& gb = bn.grad_buffer();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * c + j;
          if (gn.requires_grad) gg[j] += gy[idx] * (*xhat)[idx];
          if (bn.requires_grad) gb[j] += gy[idx];
        }
    }
    if (xn.requires_grad) {
      auto& gx = xn.grad_buffer();
      for (int i = 0; i < n; ++i) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int j = 0; j < c; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * c + j;
          const double g = gy[idx] * gn.value[j];
          sum_g += g;
          sum_gx += g * (*xhat)[idx];
        }
        for (int j = 0; j < c; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * c + j;
          const double g = gy[idx] * gn.value[j];
          gx[idx] += (*inv_std)[i] * (g - sum_g / c - (*xhat)[idx] * sum_gx / c);
        }
      }
    }
  };
  return Tensor(node);
}

namespace {

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  auto node = make_node(x.shape(), {x.node()});
  for (std::size_t i = 0; i < x.size(); ++i) node->value[i] = f(x.value()[i]);
  node->backward = [df](Node& self) {
    Node& xn = *self.inputs[0];
    if (!xn.requires_grad) return;
    auto& gx = xn.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(xn.value[i], self.value[i]);
  };
  return Tensor(node);
}

}  // namespace

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [kInvSqrt2Pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::int64_t>> index, std::vector<int> shape) {
  auto node = make_node(std::move(shape), {x.node()});
  require(node->value.size() == index->size(), "gather: index size does not match output shape");
  const auto& idx = *index;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= 0) node->value[i] = x.value()[static_cast<std::size_t>(idx[i])];
  }
  node->backward = [index](Node& self) {
    Node& xn = *self.inputs[0];
    if (!xn.requires_grad) return;
    auto& gx = xn.grad_buffer();
    const auto& idx = *index;
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] >= 0) gx[static_cast<std::size_t>(idx[i])] += self.grad[i];
  };
  return Tensor(node);
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  auto node = make_node(std::move(shape), {x.node()});
  require(node->value.size() == x.size(), "reshape: size mismatch");
  std::copy(x.value().begin(), x.value().end(), node->value.begin());
  node->backward = [](Node& self) {
    Node& xn = *self.inputs[0];
    if (!xn.requires_grad) return;
    auto& gx = xn.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  };
  return Tensor(node);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const int n = rows_of(a), ca = cols_of(a), cb = cols_of(b);
  require(rows_of(b) == n, "concat_cols: row mismatch");
  auto node = make_node({n, ca + cb}, {a.node(), b.node()});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + static_cast<std::size_t>(i) * ca, ca,
                node->value.data() + static_cast<std::size_t>(i) * (ca + cb));
    std::copy_n(b.value().data() + static_cast<std::size_t>(i) * cb, cb,
                node->value.data() + static_cast<std::size_t>(i) * (ca + cb) + ca);
  }
  node->backward = [n, ca, cb](Node& self) {
    const int c = ca + cb;
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < ca; ++j) g[static_cast<std::size_t>(i) * ca + j] += self.grad[static_cast<std::size_t>(i) * c + j];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < cb; ++j)
          g[static_cast<std::size_t>(i) * cb + j] += self.grad[static_cast<std::size_t>(i) * c + ca + j];
    }
  };
  return Tensor(node);
}

Tensor adaptive_avg_pool(const Tensor& x, int bins) {
  const int len = rows_of(x), c = cols_of(x);
  require(bins >= 1 && len >= 1, "adaptive_avg_pool: bad sizes");
  auto node = make_node({bins, c}, {x.node()});
  std::vector<std::pair<int, int>> spans(bins);
  for (int b = 0; b < bins; ++b) {
    const int start = (b * len) / bins;
    const int end = ((b + 1) * len + bins - 1) / bins;
    spans[b] = {start, end};
    for (int t = start; t < end; ++t)
      for (int j = 0; j < c; ++j)
        node->value[static_cast<std::size_t>(b) * c + j] += x.value()[static_cast<std::size_t>(t) * c + j];
    for (int j = 0; j < c; ++j) node->value[static_cast<std::size_t>(b) * c + j] /= (end - start);
  }
  node->backward = [spans, c](Node& self) {
    Node& xn = *self.inputs[0];
    if (!xn.requires_grad) return;
    auto& gx = xn.grad_buffer();
    for (std::size_t b = 0; b < spans.size(); ++b) {
      const auto [start, end] = spans[b];
      for (int t = start; t < end; ++t)
        for (int j = 0; j < c; ++j)
          gx[static_cast<std::size_t>(t) * c + j] += self.grad[b * c + j] / (end - start);
    }
  };
  return Tensor(node);
}

// ---------------------------------------------------------------------------
// Windowed attention

namespace {

// Softmax probabilities for one (window, head); masked pairs get exactly 0.
void window_head_probs(const double* qkv, int c3, int c, int d, int head, int tokens, double scale,
                       const double* table, int heads, const int* bias_index, const std::uint8_t* allowed,
                       double* probs) {
  const int off_q = head * d;
  const int off_k = c + head * d;
  for (int i = 0; i < tokens; ++i) {
    const double* q = qkv + static_cast<std::size_t>(i) * c3 + off_q;
    double* row = probs + static_cast<std::size_t>(i) * tokens;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < tokens; ++j) {
      const std::size_t pair = static_cast<std::size_t>(i) * tokens + j;
      if (allowed && !allowed[pair]) {
        row[j] = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double* k = qkv + static_cast<std::size_t>(j) * c3 + off_k;
      double s = 0.0;
      for (int e = 0; e < d; ++e) s += q[e] * k[e];
      s = s * scale + table[static_cast<std::size_t>(bias_index[pair]) * heads + head];
      row[j] = s;
      mx = std::max(mx, s);
    }
    double sum = 0.0;
    for (int j = 0; j < tokens; ++j) {
      row[j] = std::isinf(row[j]) && row[j] < 0 ? 0.0 : std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < tokens; ++j) row[j] /= sum;
  }
}

}  // namespace

std::vector<double> attention_probabilities(std::span<const double> qkv, std::span<const double> bias_table,
                                            const AttentionLayout& layout) {
  const int n = layout.tokens, heads = layout.heads;
  const int c3 = static_cast<int>(qkv.size() / (static_cast<std::size_t>(layout.windows) * n));
  const int c = c3 / 3, d = c / heads;
  std::vector<double> probs(static_cast<std::size_t>(layout.windows) * heads * n * n);
  for (int w = 0; w < layout.windows; ++w)
    for (int h = 0; h < heads; ++h) {
      const std::uint8_t* allowed =
          layout.allowed ? layout.allowed->data() + static_cast<std::size_t>(w) * n * n : nullptr;
      window_head_probs(qkv.data() + static_cast<std::size_t>(w) * n * c3, c3, c, d, h, n, layout.scale,
                        bias_table.data(), heads, layout.bias_index->data(), allowed,
                        probs.data() + (static_cast<std::size_t>(w) * heads + h) * n * n);
    }
  return probs;
}

Tensor window_attention(const Tensor& qkv, const Tensor& bias_table, const AttentionLayout& layout) {
  const int n = layout.tokens, heads = layout.heads, nw = layout.windows;
  require(rows_of(qkv) == nw * n, "window_attention: token count mismatch");
  const int c3 = cols_of(qkv);
  require(c3 % 3 == 0 && (c3 / 3) % heads == 0, "window_attention: channels not divisible by heads");
  require(bias_table.shape().size() == 2 && bias_table.dim(1) == heads, "window_attention: bias table shape");
  require(layout.bias_index && layout.bias_index->size() == static_cast<std::size_t>(n) * n,
          "window_attention: bias index size");
  const int c = c3 / 3, d = c / heads;

  auto node = make_node({nw * n, c}, {qkv.node(), bias_table.node()});
  auto probs = std::make_shared<std::vector<double>>(attention_probabilities(qkv.value(), bias_table.value(), layout));

  for (int w = 0; w < nw; ++w)
    for (int h = 0; h < heads; ++h) {
      const double* p = probs->data() + (static_cast<std::size_t>(w) * heads + h) * n * n;
      const double* base = qkv.value().data() + static_cast<std::size_t>(w) * n * c3;
      for (int i = 0; i < n; ++i) {
        double* out = node->value.data() + (static_cast<std::size_t>(w) * n + i) * c + h * d;
        for (int j = 0; j < n; ++j) {
          const double pij = p[static_cast<std::size_t>(i) * n + j];
          if (pij == 0.0) continue;
          const double* v = base + static_cast<std::size_t>(j) * c3 + 2 * c + h * d;
          for (int e = 0; e < d; ++e) out[e] += pij * v[e];
        }
      }
    }

  node->backward = [layout, probs, n, heads, nw, c3, c, d](Node& self) {
    Node& qn = *self.inputs[0];
    Node& tn = *self.inputs[1];
    std::vector<double> dummy;
    std::vector<double>& gq = qn.requires_grad ? qn.grad_buffer() : dummy;
    std::vector<double>& gt = tn.requires_grad ? tn.grad_buffer() : dummy;
    std::vector<double> dp(static_cast<std::size_t>(n) * n);
    const auto& bias_index = *layout.bias_index;
    for (int w = 0; w < nw; ++w)
      for (int h = 0; h < heads; ++h) {
        const double* p = probs->data() + (static_cast<std::size_t>(w) * heads + h) * n * n;
        const double* base = qn.value.data() + static_cast<std::size_t>(w) * n * c3;
        const double* gout = self.grad.data() + static_cast<std::size_t>(w) * n * c;
        // dP = dOut V^T ; dV = P^T dOut
        for (int i = 0; i < n; ++i) {
          const double* go = gout + static_cast<std::size_t>(i) * c + h * d;
          for (int j = 0; j < n; ++j) {
            const double pij = p[static_cast<std::size_t>(i) * n + j];
            const double* v = base + static_cast<std::size_t>(j) * c3 + 2 * c + h * d;
            double acc = 0.0;
            for (int e = 0; e < d; ++e) acc += go[e] * v[e];
            dp[static_cast<std::size_t>(i) * n + j] = acc;
            if (qn.requires_grad && pij != 0.0) {
              double* gv = gq.data() + (static_cast<std::size_t>(w) * n + j) * c3 + 2 * c + h * d;
              for (int e = 0; e < d; ++e) gv[e] += pij * go[e];
            }
          }
        }
        // dS = P * (dP - rowsum(dP * P))
        for (int i = 0; i < n; ++i) {
          double dot = 0.0;
          for (int j = 0; j < n; ++j) dot += dp[static_cast<std::size_t>(i) * n + j] * p[static_cast<std::size_t>(i) * n + j];
          for (int j = 0; j < n; ++j) {
            const std::size_t pair = static_cast<std::size_t>(i) * n + j;
            const double ds = p[pair] * (dp[pair] - dot);
            if (ds == 0.0) continue;
            if (tn.requires_grad) gt[static_cast<std::size_t>(bias_index[pair]) * heads + h] += ds;
            if (qn.requires_grad) {
              const double* q = base + static_cast<std::size_t>(i) * c3 + h * d;
              const double* k = base + static_cast<std::size_t>(j) * c3 + c + h * d;
              double* gqi = gq.data() + (static_cast<std::size_t>(w) * n + i) * c3 + h * d;
              double* gkj = gq.data() + (static_cast<std::size_t>(w) * n + j) * c3 + c + h * d;
              const double s = ds * layout.scale;
              for (int e = 0; e < d; ++e) {
                gqi[e] += s * k[e];
                gkj[e] += s * q[e];
              }
            }
          }
        }
      }
  };
  return Tensor(node);
}

}  // namespace pulse::ag
