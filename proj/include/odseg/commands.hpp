#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "odseg/config.hpp"

namespace odseg {

// Each command writes `key=value` result lines to `out` and throws an
// odseg::Error on failure.

/// Writes <data>/loc, <data>/seg and <data>/manifest.txt. Refuses a
/// non-empty dataset root unless `force`.
void cmd_gen(const ExperimentConfig& cfg, bool force, std::ostream& out);

/// Trains the centroid localiser on the loc/ split and saves
/// <out>/localizer.ckpt and <out>/localizer_curve.csv.
void cmd_train_localizer(const ExperimentConfig& cfg, std::ostream& out);

struct SegmenterOptions {
  std::optional<std::filesystem::path> pretrained;  // localiser checkpoint
  bool baseline = false;
};

/// k-fold cross-validation on all of seg/ with one scheme. Saves a
/// checkpoint and curve per fold.
void cmd_train_segmenter(const ExperimentConfig& cfg, const SegmenterOptions& opt, std::ostream& out);

/// Fraction sweep of both schemes; writes <out>/sweep.csv, <out>/sweep.svg
/// and <out>/sweep_scores.csv.
void cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& localizer, int jobs, std::ostream& out);

/// Scores a checkpoint on a named split: loc-train, loc-val, loc-test,
/// seg-all or seg-fold-K.
void cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, const std::string& split,
              std::ostream& out);

/// Checkpoint path of one cross-validation fold.
std::filesystem::path fold_checkpoint_path(const ExperimentConfig& cfg, const std::string& scheme, int fold);

}  // namespace odseg
