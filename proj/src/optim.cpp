#include "pulse/optim.hpp"

#include <cmath>

#include "pulse/error.hpp"

namespace pulse {

AdamW::AdamW(const ParameterStore& store, AdamWConfig config) : config_(config) {
  if (!(config_.lr > 0.0) || config_.weight_decay < 0.0 || !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.epsilon > 0.0))
    throw ConfigError("invalid AdamW hyperparameters");
  for (const auto& e : store.entries()) {
    m_.emplace_back(e.tensor.size(), 0.0);
    v_.emplace_back(e.tensor.size(), 0.0);
  }
}

void AdamW::step(ParameterStore& store) {
  auto& entries = store.entries();
  if (entries.size() != m_.size()) throw ConfigError("parameter store changed under the optimizer");
  for (const auto& e : entries) {
    if (e.frozen) continue;
    for (double g : e.tensor.grad())
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in " + e.name);
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, step_);
  const double c2 = 1.0 - std::pow(config_.beta2, step_);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (e.frozen) continue;
    auto value = e.tensor.mutable_value();
    const auto grad = e.tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
      const double next = value[j] * (1.0 - config_.lr * config_.weight_decay) - config_.lr * update;
      value[j] = static_cast<double>(static_cast<float>(next));
    }
  }
}

}  // namespace pulse
