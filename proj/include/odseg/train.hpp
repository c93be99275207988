#pragma once

#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "odseg/data.hpp"
#include "odseg/model.hpp"
#include "odseg/optim.hpp"

namespace odseg {

enum class Phase { Localize, Segment, Baseline };

std::string to_string(Phase phase);

struct TrainConfig {
  Phase phase = Phase::Localize;
  OptimizerKind optimizer = OptimizerKind::RmsProp;
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 30;
  std::uint64_t seed = 1;
  // Epochs without validation improvement before stopping; 0 disables.
  int patience = 20;
  // Return the best-validation weights instead of the last epoch's.
  bool select_best = true;

  void validate() const;

  static TrainConfig localize_defaults();
  static TrainConfig segment_defaults();
  static TrainConfig baseline_defaults();
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  // Validation MSE (localisation) or mean Dice (segmentation); NaN without validation data.
  double val_metric = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  UNetModel model;
  std::vector<EpochRecord> curve;
  int best_epoch = 0;
};

/// Minimises mse_loss with the configured optimizer (RMSprop by default).
/// With validation data, tracks validation MSE for early stopping and
/// best-epoch selection.
TrainResult train_localizer(UNetModel model, const TensorSet& train, const TensorSet* validation,
                            const TrainConfig& cfg);

/// Trains the decoder of an extended model (frozen encoder) on the
/// negative-log soft Dice loss. Encoder features are computed once.
TrainResult train_segmenter(UNetModel model, const TensorSet& train, const TensorSet* validation,
                            const TrainConfig& cfg);

/// Seed of the random initialisation used by train_baseline.
std::uint64_t baseline_init_seed(std::uint64_t train_seed);

/// Builds a randomly initialised U-net and trains every parameter with the
/// same loss and optimizer as train_segmenter.
TrainResult train_baseline(const ModelConfig& model_cfg, const TensorSet& train, const TensorSet* validation,
                           const TrainConfig& cfg);

/// Writes "epoch,train_loss,val_metric" rows.
void write_curve_csv(std::ostream& os, const std::vector<EpochRecord>& curve);

/// Batched evaluation helpers (eval mode).
std::vector<CentroidLabel> predict_centroids(UNetModel& model, const TensorSet& set, int batch_size = 16);
std::vector<Tensor> predict_masks(UNetModel& model, const TensorSet& set, int batch_size = 8);

}  // namespace odseg
