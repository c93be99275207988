#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "odseg/tensor.hpp"

namespace odseg {

enum class OptimizerKind { RmsProp, Adam };

OptimizerKind parse_optimizer(const std::string& s);
std::string to_string(OptimizerKind kind);

// Optimizer state covers unfrozen parameters only, in the order they appear
// in the parameter list. It is sized on the first step.

struct RmsPropState {
  double rho = 0.9;
  double epsilon = 1e-8;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> mean_square;
};

/// acc <- rho acc + (1 - rho) g^2;  w <- w - lr g / sqrt(acc + eps)
void rmsprop_step(const std::vector<Parameter*>& params, RmsPropState& state, double lr);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> m, v;
};

/// Bias-corrected Adam: w <- w - lr m_hat / (sqrt(v_hat) + eps)
void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr);

/// Owns the state of one optimizer over a fixed parameter list.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::vector<Parameter*> params);
  void step();
  OptimizerKind kind() const { return kind_; }

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<Parameter*> params_;
  RmsPropState rms_;
  AdamState adam_;
};

}  // namespace odseg
