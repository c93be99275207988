#include "odseg/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "odseg/error.hpp"

namespace odseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ParameterError(key + ": expected " + expected + ", got '" + value + "'");
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "a number");
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_integer<int>(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated list of integers");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
std::string fmt_int(T v) {
  return std::to_string(v);
}

struct Entry {
  ConfigKey key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define ODSEG_INT(name, doc, field, type)                                                              \
  Entry {                                                                                              \
    {name, doc}, [](ExperimentConfig& c, const std::string& k, const std::string& v) {                 \
      c.field = parse_integer<type>(k, v);                                                             \
    },                                                                                                 \
        [](const ExperimentConfig& c) { return fmt_int(c.field); }                                     \
  }

#define ODSEG_REAL(name, doc, field)                                                                    \
  Entry {                                                                                              \
    {name, doc}, [](ExperimentConfig& c, const std::string& k, const std::string& v) {                 \
      c.field = parse_double(k, v);                                                                    \
    },                                                                                                 \
        [](const ExperimentConfig& c) { return fmt(c.field); }                                         \
  }

#define ODSEG_OPT(name, doc, field)                                                                     \
  Entry {                                                                                              \
    {name, doc}, [](ExperimentConfig& c, const std::string& k, const std::string& v) {                 \
      try {                                                                                            \
        c.field = parse_optimizer(v);                                                                  \
      } catch (const Error&) {                                                                         \
        bad_value(k, v, "rmsprop or adam");                                                            \
      }                                                                                                \
    },                                                                                                 \
        [](const ExperimentConfig& c) { return to_string(c.field); }                                   \
  }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      {{"out_dir", "directory for checkpoints, curves and reports (default $ODSEG_OUTPUT_ROOT or ./runs)"},
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
       [](const ExperimentConfig& c) { return c.out_dir.string(); }},
      {{"data_dir", "dataset root holding loc/ and seg/ (default <out_dir>/data)"},
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data_dir = v; },
       [](const ExperimentConfig& c) { return c.dataset_root().string(); }},
      ODSEG_INT("base_seed", "seed for folds, subsets and per-run initialisation", base_seed, std::uint64_t),

      ODSEG_INT("gen.loc_count", "number of localisation images", loc_count, std::size_t),
      ODSEG_INT("gen.seg_count", "number of segmentation images", seg_count, std::size_t),
      ODSEG_INT("gen.image_size", "side of generated images in pixels", gen.image_size, int),
      ODSEG_REAL("gen.radius_min", "smallest disc radius as a fraction of the side", gen.radius_min),
      ODSEG_REAL("gen.radius_max", "largest disc radius as a fraction of the side", gen.radius_max),
      ODSEG_REAL("gen.aspect_max", "largest ellipse axis ratio (1 gives circles)", gen.aspect_max),
      ODSEG_REAL("gen.disc_intensity_min", "smallest disc brightness above background", gen.disc_intensity_min),
      ODSEG_REAL("gen.disc_intensity_max", "largest disc brightness above background", gen.disc_intensity_max),
      ODSEG_REAL("gen.background_min", "darkest mean background level", gen.background_min),
      ODSEG_REAL("gen.background_max", "brightest mean background level", gen.background_max),
      ODSEG_REAL("gen.texture_amplitude", "amplitude of low-frequency background texture", gen.texture_amplitude),
      ODSEG_INT("gen.distractor_count", "bright blobs per image", gen.distractor_count, int),
      ODSEG_REAL("gen.distractor_intensity", "blob brightness relative to the disc", gen.distractor_intensity),
      ODSEG_INT("gen.vessel_count", "dark vessels per image", gen.vessel_count, int),
      ODSEG_REAL("gen.vessel_width", "vessel half-width in pixels at the disc", gen.vessel_width),
      ODSEG_REAL("gen.vessel_contrast", "vessel darkening", gen.vessel_contrast),
      ODSEG_REAL("gen.noise_sigma", "standard deviation of pixel noise", gen.noise_sigma),
      ODSEG_INT("gen.seed", "generator seed", gen.seed, std::uint64_t),

      ODSEG_INT("pre.tiles", "CLAHE grid is tiles x tiles", pre.clahe_tiles, int),
      ODSEG_REAL("pre.clip", "CLAHE clip limit as a multiple of the uniform bin height", pre.clahe_clip),
      ODSEG_REAL("pre.gamma", "gamma exponent applied last", pre.gamma),
      {{"pre.order", "clahe,minmax,gamma or minmax,clahe,gamma"},
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         try {
           c.pre.order = parse_stage_order(v);
         } catch (const Error&) {
           bad_value(k, v, "clahe,minmax,gamma or minmax,clahe,gamma");
         }
       },
       [](const ExperimentConfig& c) { return to_string(c.pre.order); }},

      ODSEG_INT("model.input_size", "network input side; images are resized to it", model.input_size, int),
      ODSEG_INT("model.levels", "encoder depth (number of pooling steps)", model.levels, int),
      ODSEG_INT("model.base_filters", "filters at the first level, doubled per level", model.base_filters, int),
      ODSEG_REAL("model.dropout", "dropout rate after each encoder level", model.dropout_rate),

      ODSEG_OPT("loc.optimizer", "localiser optimiser", loc.optimizer),
      ODSEG_REAL("loc.lr", "localiser learning rate", loc.learning_rate),
      ODSEG_INT("loc.batch_size", "localiser batch size", loc.batch_size, int),
      ODSEG_INT("loc.epochs", "localiser epoch limit", loc.epochs, int),
      ODSEG_INT("loc.patience", "epochs without validation improvement before stopping (0 disables)",
                loc.patience, int),
      ODSEG_INT("loc.seed", "localiser split, initialisation and shuffling seed", loc.seed, std::uint64_t),
      ODSEG_REAL("loc.train_fraction", "share of localisation images used for training", loc_train_fraction),
      ODSEG_REAL("loc.val_fraction", "share used for validation; the rest is test", loc_val_fraction),

      ODSEG_OPT("seg.optimizer", "segmentation optimiser", seg.optimizer),
      ODSEG_REAL("seg.lr", "segmentation learning rate", seg.learning_rate),
      ODSEG_INT("seg.batch_size", "segmentation batch size", seg.batch_size, int),
      ODSEG_INT("seg.epochs", "segmentation epochs (fixed, no early stopping)", seg.epochs, int),

      {{"sweep.fractions", "training percentages, comma-separated multiples of 10"},
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.fractions = parse_int_list(k, v); },
       [](const ExperimentConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.fractions.size(); ++i) s += (i ? "," : "") + std::to_string(c.fractions[i]);
         return s;
       }},
      ODSEG_INT("sweep.folds", "cross-validation folds", folds, int),
  };
  return entries;
}

#undef ODSEG_INT
#undef ODSEG_REAL
#undef ODSEG_OPT

const Entry& find_entry(const std::string& key) {
  for (const auto& e : registry())
    if (e.key.name == key) return e;
  throw ParameterError("unknown config key '" + key + "'");
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  const char* root = std::getenv(kOutputRootEnv);
  out_dir = (root && *root) ? std::filesystem::path(root) : std::filesystem::path("runs");
  // The segmentation data is evaluated on held-out folds, so no run may pick
  // weights or stop early by looking at them.
  seg.patience = 0;
  seg.select_best = false;
  // keeps a full ten-fraction sweep of both schemes near an hour on one core
  seg.epochs = 15;
}

PreprocessConfig ExperimentConfig::preprocess() const {
  PreprocessConfig p = pre;
  p.target_size = model.input_size;
  return p;
}

void ExperimentConfig::validate() const {
  gen.validate();
  preprocess().validate();
  model.validate();
  loc.validate();
  seg.validate();
  if (loc_count < 10) throw ParameterError("gen.loc_count: need at least 10 images");
  if (folds < 2) throw ParameterError("sweep.folds: need at least 2 folds");
  if (seg_count < static_cast<std::size_t>(folds)) throw ParameterError("gen.seg_count: fewer images than folds");
  if (!(loc_train_fraction > 0.0 && loc_val_fraction > 0.0 && loc_train_fraction + loc_val_fraction < 1.0))
    throw ParameterError("loc.train_fraction/loc.val_fraction: need positive shares summing below 1");
  for (int f : fractions)
    if (f < 10 || f > 100 || f % 10 != 0) throw ParameterError("sweep.fractions: " + std::to_string(f) +
                                                               " is not one of 10, 20, ..., 100");
  if (out_dir.empty()) throw ParameterError("out_dir: must not be empty");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : registry()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_entry(key).set(cfg, key, value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return find_entry(key).get(cfg); }

void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  apply_config_text(cfg, ss.str(), path.string());
  return cfg;
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : registry()) out += e.key.name + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace odseg
