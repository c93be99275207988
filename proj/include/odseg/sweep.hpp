#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "odseg/data.hpp"
#include "odseg/model.hpp"
#include "odseg/stats.hpp"
#include "odseg/train.hpp"

namespace odseg {

enum class Scheme : std::uint64_t { Pretrained = 1, Baseline = 2 };

std::string to_string(Scheme scheme);

struct SweepSettings {
  std::vector<int> fractions{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  int folds = 5;
  std::uint64_t base_seed = 1;
  int jobs = 1;
  ModelConfig model;
  TrainConfig train = TrainConfig::segment_defaults();
};

/// Seed of one (fold, fraction, scheme) training run.
std::uint64_t run_seed(std::uint64_t base_seed, int fold, int fraction, Scheme scheme);
FoldPlan sweep_folds(std::size_t n, const SweepSettings& s);
std::vector<std::size_t> fold_training_ids(const FoldPlan& plan, int fold, int fraction, std::uint64_t base_seed);

/// One trained fold: validation ids in fold order and their Dice scores.
struct FoldRun {
  int fold = 0;
  int fraction = 100;
  Scheme scheme = Scheme::Pretrained;
  std::size_t train_size = 0;
  std::vector<std::size_t> validation_ids;
  std::vector<double> dice;
  std::vector<EpochRecord> curve;
};

/// Trains one scheme on one fold at one fraction and scores the fold's
/// validation images. `localizer` is required for the pretrained scheme.
/// With `monitor`, per-epoch validation Dice is recorded in the curve.
FoldRun run_fold(const TensorSet& data, const FoldPlan& plan, int fold, int fraction, Scheme scheme,
                 const UNetModel* localizer, const SweepSettings& s, bool monitor = false,
                 UNetModel* trained = nullptr);

struct FractionRow {
  int fraction = 0;
  double mean_pre = 0.0, std_pre = 0.0;
  double mean_base = 0.0, std_base = 0.0;
  TTestResult test;
};

struct RunReport {
  std::vector<FractionRow> rows;
  // Per (fraction, fold) raw scores, ordered by fraction then fold.
  std::vector<FoldRun> pretrained;
  std::vector<FoldRun> baseline;
};

/// For every fraction and fold, trains both schemes on the same nested
/// training subset, scores every validation image, and applies a paired
/// t-test over all validation images pooled across folds.
RunReport efficiency_sweep(const TensorSet& data, const UNetModel* localizer, const SweepSettings& s);

/// Pools per-image scores over folds for one fraction.
PairedScores pooled_scores(const RunReport& report, int fraction);

/// Columns: fraction,mean_pre,std_pre,mean_base,std_base,t,df,p
void write_report_csv(std::ostream& os, const RunReport& report);
std::string render_svg(const RunReport& report);

}  // namespace odseg
