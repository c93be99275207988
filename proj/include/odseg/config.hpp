#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "odseg/data.hpp"
#include "odseg/model.hpp"
#include "odseg/preprocess.hpp"
#include "odseg/train.hpp"

namespace odseg {

inline constexpr const char* kOutputRootEnv = "ODSEG_OUTPUT_ROOT";

/// Everything one experiment needs. Populated from `key = value` text.
struct ExperimentConfig {
  std::filesystem::path out_dir;
  std::filesystem::path data_dir;  // empty: <out_dir>/data

  SyntheticSpec gen;
  std::size_t loc_count = 1024;
  std::size_t seg_count = 92;

  PreprocessConfig pre;
  ModelConfig model;

  TrainConfig loc = TrainConfig::localize_defaults();
  double loc_train_fraction = 0.8;
  double loc_val_fraction = 0.1;

  TrainConfig seg = TrainConfig::segment_defaults();

  std::vector<int> fractions{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  int folds = 5;
  std::uint64_t base_seed = 1;

  ExperimentConfig();

  std::filesystem::path dataset_root() const { return data_dir.empty() ? out_dir / "data" : data_dir; }
  /// Preprocessing settings with the target size tied to the model input.
  PreprocessConfig preprocess() const;
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

/// Every accepted key with a one-line description.
const std::vector<ConfigKey>& config_keys();

/// Applies one assignment; unknown keys and malformed values throw
/// ParameterError naming the key.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

/// Parses `key = value` lines; `#` starts a comment.
void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full config as `key = value` lines, one per registered key.
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace odseg
