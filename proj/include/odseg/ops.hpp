#pragma once

#include <vector>

#include "odseg/rng.hpp"
#include "odseg/tensor.hpp"

namespace odseg {

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel running statistics of a batch-norm layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormState(std::size_t channels = 0) : running_mean(channels, 0.0), running_var(channels, 1.0) {}
  bool operator==(const BatchNormState&) const = default;
};

// All image tensors are [B, C, H, W].

/// 3x3 cross-correlation, stride 1, zero padding 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor conv1x1(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Non-overlapping 2x2 max pooling. Ties go to the first element in
/// row-major window order.
Tensor maxpool2(const Tensor& input);

/// Train mode normalizes with batch statistics (population variance) and
/// updates `state` with momentum 0.1; eval mode normalizes with `state`.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode);

Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);

/// Inverted dropout; identity in eval mode or when rate is 0.
Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng);

/// [B, ...] -> [B, F] view copy.
Tensor flatten(const Tensor& input);

/// input [B, F], weight [O, F], bias [O] -> [B, O].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Nearest-neighbour 2x upsampling.
Tensor upsample2(const Tensor& input);

Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Concatenates along the batch axis. All inputs share trailing dimensions.
Tensor concat_batch(const std::vector<Tensor>& parts);

Tensor sum(const Tensor& input);
Tensor scale(const Tensor& input, double factor);
Tensor add(const Tensor& a, const Tensor& b);

}  // namespace odseg
