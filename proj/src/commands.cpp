#include "odseg/commands.hpp"

#include <cstdio>
#include <fstream>

#include "odseg/error.hpp"
#include "odseg/metrics.hpp"
#include "odseg/stats.hpp"
#include "odseg/sweep.hpp"
#include "odseg/train.hpp"

namespace fs = std::filesystem;

namespace odseg {

namespace {

constexpr std::uint64_t kSegDataTag = 0x5e6;
constexpr std::uint64_t kLocSplitTag = 0x5e7;
constexpr std::uint64_t kLocInitTag = 0x10c;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FileError("cannot create directory " + dir.string() + ": " + ec.message());
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot write " + path.string());
  fn(os);
  if (!os) throw FileError("write failed: " + path.string());
}

UNetModel load_checkpoint(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw FileError("checkpoint not found: " + path.string());
  return load_model(path);
}

PreprocessConfig preprocess_for(const ExperimentConfig& cfg, const UNetModel& model) {
  PreprocessConfig p = cfg.preprocess();
  p.target_size = model.config().input_size;
  return p;
}

SweepSettings sweep_settings(const ExperimentConfig& cfg, int jobs) {
  SweepSettings s;
  s.fractions = cfg.fractions;
  s.folds = cfg.folds;
  s.base_seed = cfg.base_seed;
  s.jobs = jobs;
  s.model = cfg.model;
  s.train = cfg.seg;
  return s;
}

SplitIds localization_split(const ExperimentConfig& cfg, std::size_t n) {
  return train_val_test_split(n, cfg.loc_train_fraction, cfg.loc_val_fraction,
                              derive_seed(cfg.loc.seed, {kLocSplitTag}));
}

std::vector<double> dice_scores(UNetModel& model, const TensorSet& set) {
  const auto probs = predict_masks(model, set);
  std::vector<double> out;
  for (std::size_t i = 0; i < probs.size(); ++i)
    out.push_back(dice_coefficient(threshold_mask(probs[i]), threshold_mask(set.targets[i])));
  return out;
}

}  // namespace

fs::path fold_checkpoint_path(const ExperimentConfig& cfg, const std::string& scheme, int fold) {
  return cfg.out_dir / (scheme + "_fold" + std::to_string(fold) + ".ckpt");
}

void cmd_gen(const ExperimentConfig& cfg, bool force, std::ostream& out) {
  cfg.validate();
  const fs::path root = cfg.dataset_root();
  if (fs::exists(root) && !fs::is_directory(root)) throw FileError(root.string() + " exists and is not a directory");
  if (fs::is_directory(root) && !fs::is_empty(root)) {
    if (!force) throw StateError("output directory " + root.string() + " is not empty (pass --force to overwrite)");
    std::error_code ec;
    for (const char* name : {"loc", "seg", "manifest.txt"}) fs::remove_all(root / name, ec);
    if (ec) throw FileError("cannot clear " + root.string() + ": " + ec.message());
  }
  ensure_dir(root);

  SyntheticSpec loc_spec = cfg.gen;
  SyntheticSpec seg_spec = cfg.gen;
  seg_spec.seed = derive_seed(cfg.gen.seed, {kSegDataTag});
  const std::string loc_manifest = describe(loc_spec) + "count = " + std::to_string(cfg.loc_count) + "\n";
  const std::string seg_manifest = describe(seg_spec) + "count = " + std::to_string(cfg.seg_count) + "\n";
  write_dataset(generate_dataset(loc_spec, cfg.loc_count), root / "loc", loc_manifest);
  write_dataset(generate_dataset(seg_spec, cfg.seg_count), root / "seg", seg_manifest);
  write_file(root / "manifest.txt", [&](std::ostream& os) {
    os << "# localisation set (loc/)\n" << loc_manifest << "\n# segmentation set (seg/)\n" << seg_manifest;
  });

  out << "data_dir=" << root.string() << "\n";
  out << "loc_count=" << cfg.loc_count << "\n";
  out << "seg_count=" << cfg.seg_count << "\n";
}

void cmd_train_localizer(const ExperimentConfig& cfg, std::ostream& out) {
  cfg.validate();
  const Dataset data = load_dataset(cfg.dataset_root() / "loc");
  ensure_dir(cfg.out_dir);
  const SplitIds split = localization_split(cfg, data.size());
  const PreprocessConfig pre = cfg.preprocess();
  const TensorSet train = localization_set(data, split.train, pre);
  const TensorSet val = localization_set(data, split.validation, pre);
  const TensorSet test = localization_set(data, split.test, pre);

  Rng init(derive_seed(cfg.loc.seed, {kLocInitTag}));
  TrainConfig tc = cfg.loc;
  tc.phase = Phase::Localize;
  TrainResult result = train_localizer(build_localizer(cfg.model, init), train, &val, tc);

  const fs::path ckpt = cfg.out_dir / "localizer.ckpt";
  const fs::path curve = cfg.out_dir / "localizer_curve.csv";
  save_model(result.model, ckpt);
  write_file(curve, [&](std::ostream& os) { write_curve_csv(os, result.curve); });

  auto truth = [](const TensorSet& s) {
    std::vector<CentroidLabel> t;
    for (const auto& y : s.targets) t.push_back({y.values()[0], y.values()[1]});
    return t;
  };
  const auto rv = localization_report(predict_centroids(result.model, val), truth(val));
  const auto rt = localization_report(predict_centroids(result.model, test), truth(test));
  out << "checkpoint=" << ckpt.string() << "\n";
  out << "curve=" << curve.string() << "\n";
  out << "train_n=" << train.size() << "\nval_n=" << val.size() << "\ntest_n=" << test.size() << "\n";
  out << "epochs_run=" << result.curve.size() << "\n";
  out << "best_epoch=" << result.best_epoch << "\n";
  out << "val_mse=" << num(rv.mse) << "\n";
  out << "val_mean_euclidean=" << num(rv.mean_euclidean) << "\n";
  out << "test_mse=" << num(rt.mse) << "\n";
  out << "test_mean_euclidean=" << num(rt.mean_euclidean) << "\n";
}

void cmd_train_segmenter(const ExperimentConfig& cfg, const SegmenterOptions& opt, std::ostream& out) {
  if (opt.pretrained && opt.baseline) throw UsageError("--pretrained and --baseline are mutually exclusive");
  if (!opt.pretrained && !opt.baseline) throw UsageError("train-segmenter needs --pretrained <ckpt> or --baseline");
  cfg.validate();
  std::optional<UNetModel> localizer;
  if (opt.pretrained) {
    localizer = load_checkpoint(*opt.pretrained);
    if (localizer->kind() != ModelKind::Localizer)
      throw FormatError("checkpoint kind mismatch: " + opt.pretrained->string() + " holds a " +
                        to_string(localizer->kind()) + ", expected a localizer");
  }
  const Scheme scheme = localizer ? Scheme::Pretrained : Scheme::Baseline;
  const std::string name = to_string(scheme);

  const Dataset data = load_dataset(cfg.dataset_root() / "seg");
  ensure_dir(cfg.out_dir);
  const PreprocessConfig pre = localizer ? preprocess_for(cfg, *localizer) : cfg.preprocess();
  const TensorSet set = segmentation_set(data, all_ids(data.size()), pre);
  const SweepSettings s = sweep_settings(cfg, 1);
  const FoldPlan plan = sweep_folds(set.size(), s);

  std::vector<double> pooled;
  out << "scheme=" << name << "\n";
  for (int k = 0; k < s.folds; ++k) {
    UNetModel trained;
    const FoldRun run = run_fold(set, plan, k, 100, scheme, localizer ? &*localizer : nullptr, s, true, &trained);
    save_model(trained, fold_checkpoint_path(cfg, name, k));
    write_file(cfg.out_dir / (name + "_fold" + std::to_string(k) + "_curve.csv"),
               [&](std::ostream& os) { write_curve_csv(os, run.curve); });
    pooled.insert(pooled.end(), run.dice.begin(), run.dice.end());
    out << "fold" << k << ".checkpoint=" << fold_checkpoint_path(cfg, name, k).string() << "\n";
    out << "fold" << k << ".dice_mean=" << num(mean(run.dice)) << "\n";
  }
  out << "n=" << pooled.size() << "\n";
  out << "dice_mean=" << num(mean(pooled)) << "\n";
  out << "dice_std=" << num(sample_std(pooled)) << "\n";
}

void cmd_sweep(const ExperimentConfig& cfg, const fs::path& localizer_path, int jobs, std::ostream& out) {
  if (jobs < 1) throw UsageError("--jobs must be at least 1");
  cfg.validate();
  UNetModel localizer = load_checkpoint(localizer_path);
  if (localizer.kind() != ModelKind::Localizer)
    throw FormatError("checkpoint kind mismatch: " + localizer_path.string() + " holds a " +
                      to_string(localizer.kind()) + ", expected a localizer");
  const Dataset data = load_dataset(cfg.dataset_root() / "seg");
  ensure_dir(cfg.out_dir);
  const TensorSet set = segmentation_set(data, all_ids(data.size()), preprocess_for(cfg, localizer));
  const RunReport report = efficiency_sweep(set, &localizer, sweep_settings(cfg, jobs));

  const fs::path csv = cfg.out_dir / "sweep.csv";
  const fs::path svg = cfg.out_dir / "sweep.svg";
  const fs::path scores = cfg.out_dir / "sweep_scores.csv";
  write_file(csv, [&](std::ostream& os) { write_report_csv(os, report); });
  write_file(svg, [&](std::ostream& os) { os << render_svg(report); });
  write_file(scores, [&](std::ostream& os) {
    os << "fraction,fold,scheme,id,dice\n";
    for (const auto* runs : {&report.pretrained, &report.baseline})
      for (const auto& r : *runs)
        for (std::size_t i = 0; i < r.dice.size(); ++i)
          os << r.fraction << ',' << r.fold << ',' << to_string(r.scheme) << ',' << r.validation_ids[i] << ','
             << num(r.dice[i]) << '\n';
  });
  out << "csv=" << csv.string() << "\nsvg=" << svg.string() << "\nscores=" << scores.string() << "\n";
  for (const auto& r : report.rows)
    out << "fraction" << r.fraction << ": pretrained=" << num(r.mean_pre) << " baseline=" << num(r.mean_base)
        << " t=" << num(r.test.t) << " p=" << num(r.test.p) << "\n";
}

void cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::string& split, std::ostream& out) {
  cfg.validate();
  UNetModel model = load_checkpoint(checkpoint);
  const bool loc_split = split.rfind("loc-", 0) == 0;
  const bool seg_split = split.rfind("seg-", 0) == 0;
  if (!loc_split && !seg_split)
    throw UsageError("unknown split '" + split + "' (expected loc-train, loc-val, loc-test, seg-all or seg-fold-K)");
  const bool is_localizer = model.kind() == ModelKind::Localizer;
  if (loc_split != is_localizer)
    throw FormatError("checkpoint kind mismatch: " + to_string(model.kind()) + " checkpoint cannot be scored on " +
                      split);
  const PreprocessConfig pre = preprocess_for(cfg, model);
  out << "kind=" << to_string(model.kind()) << "\nsplit=" << split << "\n";

  if (loc_split) {
    const Dataset data = load_dataset(cfg.dataset_root() / "loc");
    const SplitIds ids = localization_split(cfg, data.size());
    const std::vector<std::size_t>* chosen = nullptr;
    if (split == "loc-train") chosen = &ids.train;
    if (split == "loc-val") chosen = &ids.validation;
    if (split == "loc-test") chosen = &ids.test;
    if (!chosen) throw UsageError("unknown split '" + split + "'");
    const TensorSet set = localization_set(data, *chosen, pre);
    std::vector<CentroidLabel> truth;
    for (const auto& y : set.targets) truth.push_back({y.values()[0], y.values()[1]});
    const auto r = localization_report(predict_centroids(model, set), truth);
    out << "n=" << r.count << "\nmse=" << num(r.mse) << "\nmean_euclidean=" << num(r.mean_euclidean) << "\n";
    return;
  }

  const Dataset data = load_dataset(cfg.dataset_root() / "seg");
  std::vector<std::size_t> ids;
  if (split == "seg-all") {
    ids = all_ids(data.size());
  } else if (split.rfind("seg-fold-", 0) == 0) {
    int fold = -1;
    try {
      std::size_t used = 0;
      fold = std::stoi(split.substr(9), &used);
      if (used != split.size() - 9) fold = -1;
    } catch (const std::exception&) {
    }
    if (fold < 0 || fold >= cfg.folds)
      throw UsageError("split '" + split + "' needs a fold in [0, " + std::to_string(cfg.folds) + ")");
    ids = sweep_folds(data.size(), sweep_settings(cfg, 1)).members(fold);
  } else {
    throw UsageError("unknown split '" + split + "'");
  }
  const TensorSet set = segmentation_set(data, ids, pre);
  const auto d = dice_scores(model, set);
  out << "n=" << d.size() << "\ndice_mean=" << num(mean(d)) << "\ndice_std=" << num(sample_std(d)) << "\n";
}

}  // namespace odseg
