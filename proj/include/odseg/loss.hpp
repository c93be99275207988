#pragma once

#include "odseg/tensor.hpp"

namespace odseg {

inline constexpr double kSoftDiceEpsilon = 1e-6;

/// Mean over all entries of (pred - target)^2.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// (2 sum(p g) + eps) / (sum p + sum g + eps), pooled over the whole batch.
double soft_dice(const Tensor& pred, const Tensor& target);

/// -log(soft_dice). `target` must be binary.
Tensor neg_log_soft_dice_loss(const Tensor& pred, const Tensor& target);

}  // namespace odseg
