#include "odseg/loss.hpp"

#include <cmath>

#include "odseg/error.hpp"

namespace odseg {

namespace {

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": prediction " + shape_str(a.shape()) + " vs target " + shape_str(b.shape()));
}

struct DiceTerms {
  double intersection = 0.0;
  double denominator = 0.0;
};

DiceTerms dice_terms(const Tensor& pred, const Tensor& target) {
  DiceTerms t;
  auto p = pred.values();
  auto g = target.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    t.intersection += p[i] * g[i];
    t.denominator += p[i] + g[i];
  }
  return t;
}

}  // namespace

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_same(pred, target, "mse_loss");
  const auto n = static_cast<double>(pred.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred.values()[i] - target.values()[i];
    acc += d * d;
  }
  return Tensor::make_result({}, {acc / n}, {pred, target}, [n](detail::Node& self) {
    auto& p = *self.parents[0];
    auto& t = *self.parents[1];
    const double g = self.grad[0] * 2.0 / n;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double d = p.values[i] - t.values[i];
      if (p.requires_grad) p.grad[i] += g * d;
      if (t.requires_grad) t.grad[i] -= g * d;
    }
  });
}

double soft_dice(const Tensor& pred, const Tensor& target) {
  check_same(pred, target, "soft_dice");
  const auto t = dice_terms(pred, target);
  return (2.0 * t.intersection + kSoftDiceEpsilon) / (t.denominator + kSoftDiceEpsilon);
}

Tensor neg_log_soft_dice_loss(const Tensor& pred, const Tensor& target) {
  check_same(pred, target, "neg_log_soft_dice_loss");
  for (double v : target.values())
    if (v != 0.0 && v != 1.0) throw ParameterError("neg_log_soft_dice_loss: target must be binary");
  const auto t = dice_terms(pred, target);
  const double num = 2.0 * t.intersection + kSoftDiceEpsilon;
  const double den = t.denominator + kSoftDiceEpsilon;
  // loss = log(den) - log(num)
  // Only the prediction is differentiated; the target is a constant.
  std::vector<double> truth(target.values().begin(), target.values().end());
  return Tensor::make_result({}, {std::log(den) - std::log(num)}, {pred},
                             [num, den, truth = std::move(truth)](detail::Node& self) {
                               auto& p = *self.parents[0];
                               const double up = self.grad[0];
                               for (std::size_t i = 0; i < truth.size(); ++i)
                                 p.grad[i] += up * (1.0 / den - 2.0 * truth[i] / num);
                             });
}

}  // namespace odseg
