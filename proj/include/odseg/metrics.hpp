#pragma once

#include <vector>

#include "odseg/data.hpp"
#include "odseg/tensor.hpp"

namespace odseg {

inline constexpr double kMaskThreshold = 0.5;

double euclidean_error(const CentroidLabel& pred, const CentroidLabel& truth);

/// 1 where prob > threshold (strict), else 0. Accepts [H,W], [1,H,W] or [1,1,H,W].
MaskLabel threshold_mask(const Tensor& prob, double threshold = kMaskThreshold);

/// 2|a & b| / (|a| + |b|); two empty masks score 1.
double dice_coefficient(const MaskLabel& a, const MaskLabel& b);

/// Mean squared coordinate error (per-coordinate mean) and mean Euclidean error.
struct LocalizationReport {
  double mse = 0.0;
  double mean_euclidean = 0.0;
  std::size_t count = 0;
};

LocalizationReport localization_report(const std::vector<CentroidLabel>& pred,
                                       const std::vector<CentroidLabel>& truth);

}  // namespace odseg
