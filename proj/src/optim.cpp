#include "odseg/optim.hpp"

#include <cmath>

#include "odseg/error.hpp"

namespace odseg {

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "rmsprop") return OptimizerKind::RmsProp;
  if (s == "adam") return OptimizerKind::Adam;
  throw ParameterError("unknown optimizer '" + s + "' (expected rmsprop or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::RmsProp ? "rmsprop" : "adam"; }

namespace {

std::vector<Parameter*> trainable(const std::vector<Parameter*>& params) {
  std::vector<Parameter*> out;
  for (auto* p : params)
    if (!p->frozen) out.push_back(p);
  return out;
}

// Sizes the state on first use and rejects later drift.
void sync_shapes(const std::vector<Parameter*>& live, std::vector<Shape>& shapes,
                 std::initializer_list<std::vector<std::vector<double>>*> buffers) {
  if (shapes.empty() && !live.empty()) {
    for (auto* p : live) shapes.push_back(p->tensor.shape());
    for (auto* buf : buffers) {
      buf->clear();
      for (auto* p : live) buf->emplace_back(p->tensor.numel(), 0.0);
    }
    return;
  }
  if (shapes.size() != live.size()) throw ContractError("optimizer state no longer matches the parameter list");
  for (std::size_t i = 0; i < live.size(); ++i)
    if (shapes[i] != live[i]->tensor.shape())
      throw ContractError("parameter '" + live[i]->name + "' changed shape since the optimizer state was created");
}

}  // namespace

void rmsprop_step(const std::vector<Parameter*>& params, RmsPropState& state, double lr) {
  const auto live = trainable(params);
  sync_shapes(live, state.shapes, {&state.mean_square});
  for (std::size_t k = 0; k < live.size(); ++k) {
    auto w = live[k]->tensor.values();
    auto g = live[k]->tensor.grad();
    auto& acc = state.mean_square[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc[i] = state.rho * acc[i] + (1.0 - state.rho) * g[i] * g[i];
      w[i] -= lr * g[i] / std::sqrt(acc[i] + state.epsilon);
    }
  }
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr) {
  const auto live = trainable(params);
  sync_shapes(live, state.shapes, {&state.m, &state.v});
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < live.size(); ++k) {
    auto w = live[k]->tensor.values();
    auto g = live[k]->tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::vector<Parameter*> params)
    : kind_(kind), lr_(learning_rate), params_(std::move(params)) {
  if (!(learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
}

void Optimizer::step() {
  if (kind_ == OptimizerKind::RmsProp) rmsprop_step(params_, rms_, lr_);
  else adam_step(params_, adam_, lr_);
}

}  // namespace odseg
