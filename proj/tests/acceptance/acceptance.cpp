// Acceptance checks. Each criterion prints one "[PASS]" or "[FAIL]" line,
// also appended to <work>/results.txt; the exit code is nonzero when any
// selected criterion fails.
//
//   odseg_acceptance [--work DIR] [--prepare] [criterion ...]

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "../support/clahe_reference.hpp"
#include "../support/gradient_suite.hpp"
#include "../support/t_oracle.hpp"
#include "odseg/commands.hpp"
#include "odseg/error.hpp"
#include "odseg/loss.hpp"
#include "odseg/metrics.hpp"
#include "odseg/preprocess.hpp"
#include "odseg/stats.hpp"
#include "odseg/sweep.hpp"
#include "odseg/train.hpp"

using namespace odseg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// 1. gradient suite

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto reports = testsupport::run_gradient_suite(20, 2024);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_op;
  int fewest = std::numeric_limits<int>::max();
  for (const auto& r : reports) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_op = r.op;
    }
    fewest = std::min(fewest, r.instances);
  }
  const bool pass = worst <= 1e-4 && fewest >= 20 && secs < 60.0;
  return {pass, std::to_string(reports.size()) + " ops/losses x " + std::to_string(fewest) +
                    " instances, max rel err " + fmt(worst, 3) + " (" + worst_op + ", limit 1e-4), " + fmt(secs, 3) +
                    " s (limit 60 s)"};
}

// ---------------------------------------------------------------------------
// 2. freeze invariant

std::string encoder_bytes(const UNetModel& m) {
  std::string out;
  auto put = [&](std::span<const double> v) {
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  };
  for (const auto& level : m.encoder().levels)
    for (const ConvBlock* b : {&level.first, &level.second}) {
      for (const Parameter* p : {&b->weight, &b->bias, &b->gamma, &b->beta}) put(p->tensor.values());
      put(b->stats.running_mean);
      put(b->stats.running_var);
    }
  return out;
}

struct DeskSets {
  TensorSet loc, seg;
};

DeskSets desk_sets(std::size_t n, std::uint64_t seed) {
  const ExperimentConfig cfg;
  SyntheticSpec spec = cfg.gen;
  spec.seed = seed;
  const Dataset d = generate_dataset(spec, n);
  return {localization_set(d, all_ids(n), cfg.preprocess()), segmentation_set(d, all_ids(n), cfg.preprocess())};
}

Outcome freeze_invariant() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg;
  const DeskSets d = desk_sets(8, 41);

  Rng rng(41);
  TrainConfig lc = cfg.loc;
  lc.epochs = 2;
  UNetModel ext = train_localizer(build_localizer(cfg.model, rng), d.loc, nullptr, lc).model;
  extend_to_unet(ext, rng);
  const std::string before = encoder_bytes(ext);

  TrainConfig sc = cfg.seg;
  sc.epochs = 25;
  const int steps = sc.epochs * static_cast<int>((d.seg.size() + sc.batch_size - 1) / sc.batch_size);
  const TrainResult pre = train_segmenter(ext.clone(), d.seg, nullptr, sc);
  const bool frozen_ok = encoder_bytes(pre.model) == before;
  const bool decoder_moved = encode_model(pre.model) != encode_model(ext);

  Rng init(baseline_init_seed(sc.seed));
  const std::string base_before = encoder_bytes(build_baseline(cfg.model, init));
  const TrainResult base = train_baseline(cfg.model, d.seg, nullptr, sc);
  const bool base_changed = encoder_bytes(base.model) != base_before;

  const double secs = seconds_since(t0);
  const bool pass = frozen_ok && decoder_moved && base_changed && steps >= 50 && secs < 120.0;
  return {pass, std::to_string(steps) + " phase-2 steps: encoder bytes and running stats " +
                    (frozen_ok ? "unchanged" : "CHANGED") + ", decoder " + (decoder_moved ? "updated" : "NOT updated") +
                    "; baseline encoder " + (base_changed ? "changed" : "UNCHANGED") + ", " + fmt(secs, 3) +
                    " s (limit 120 s)"};
}

// ---------------------------------------------------------------------------
// 3. overfit smoke tests

double training_dice(UNetModel& model, const TensorSet& set) {
  const auto probs = predict_masks(model, set);
  std::vector<double> d;
  for (std::size_t i = 0; i < probs.size(); ++i)
    d.push_back(dice_coefficient(threshold_mask(probs[i]), threshold_mask(set.targets[i])));
  return mean(d);
}

Outcome overfit() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg;
  const DeskSets d = desk_sets(16, 43);

  Rng rng(43);
  TrainConfig lc = cfg.loc;
  lc.epochs = 400;
  lc.patience = 0;
  lc.select_best = false;
  TrainResult loc = train_localizer(build_localizer(cfg.model, rng), d.loc, nullptr, lc);
  const auto pred = predict_centroids(loc.model, d.loc);
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    sq += std::pow(pred[i].x - d.loc.targets[i].values()[0], 2) + std::pow(pred[i].y - d.loc.targets[i].values()[1], 2);
  const double mse = sq / (2.0 * static_cast<double>(pred.size()));

  TensorSet four;
  for (std::size_t i = 0; i < 4; ++i) {
    four.inputs.push_back(d.seg.inputs[i]);
    four.targets.push_back(d.seg.targets[i]);
  }
  TrainConfig sc = cfg.seg;
  sc.epochs = 150;
  UNetModel ext = loc.model.clone();
  extend_to_unet(ext, rng);
  TrainResult pre = train_segmenter(std::move(ext), four, nullptr, sc);
  TrainResult base = train_baseline(cfg.model, four, nullptr, sc);
  const double dice_pre = training_dice(pre.model, four);
  const double dice_base = training_dice(base.model, four);

  const double secs = seconds_since(t0);
  const bool pass = mse <= 4.0 && dice_pre >= 0.95 && dice_base >= 0.95 && secs < 600.0;
  return {pass, "localizer training MSE " + fmt(mse) + " px^2 on 16 images (limit 4, last-epoch train-mode loss " +
                    fmt(loc.curve.back().train_loss) + "); training Dice on 4 images pretrained " + fmt(dice_pre) +
                    ", baseline " + fmt(dice_base) + " (limit 0.95); " + fmt(secs, 3) + " s (limit 600 s)"};
}

// ---------------------------------------------------------------------------
// Shared desk-scale experiment: default dataset and localizer, cached in the
// work directory and keyed by the full config text.

struct Desk {
  ExperimentConfig cfg;
  fs::path localizer;
  std::map<std::string, std::string> loc_report;
  double prepare_seconds = 0.0;  // 0 when the cache was reused
};

Desk prepare_desk(const fs::path& work) {
  Desk desk;
  desk.cfg.out_dir = work / "desk";
  desk.localizer = desk.cfg.out_dir / "localizer.ckpt";
  const fs::path stamp = desk.cfg.out_dir / "prepared.cfg";
  const fs::path report = desk.cfg.out_dir / "localizer.txt";
  const std::string key = dump_config(desk.cfg);
  if (fs::exists(stamp) && slurp(stamp) == key && fs::exists(desk.localizer) && fs::exists(report)) {
    desk.loc_report = key_values(slurp(report));
    return desk;
  }
  const auto t0 = Clock::now();
  fs::remove_all(desk.cfg.out_dir);
  std::ostringstream sink, out;
  cmd_gen(desk.cfg, false, sink);
  cmd_train_localizer(desk.cfg, out);
  std::ofstream(report) << out.str();
  std::ofstream(stamp) << key;
  desk.loc_report = key_values(out.str());
  desk.prepare_seconds = seconds_since(t0);
  return desk;
}

Outcome localizer_goal(const Desk& desk) {
  const double val = std::stod(desk.loc_report.at("val_mean_euclidean"));
  const double test = std::stod(desk.loc_report.at("test_mean_euclidean"));
  return {val <= 6.0, "default localizer validation mean Euclidean error " + fmt(val) + " px (goal 6 px), test " +
                          fmt(test) + " px, best epoch " + desk.loc_report.at("best_epoch")};
}

// ---------------------------------------------------------------------------
// 4. pretrained vs baseline at 100%

Outcome full_data_direction(const fs::path& work) {
  const auto t0 = Clock::now();
  const Desk desk = prepare_desk(work);
  std::ostringstream pre_out, base_out;
  SegmenterOptions pre_opt;
  pre_opt.pretrained = desk.localizer;
  cmd_train_segmenter(desk.cfg, pre_opt, pre_out);
  SegmenterOptions base_opt;
  base_opt.baseline = true;
  cmd_train_segmenter(desk.cfg, base_opt, base_out);
  const auto pre = key_values(pre_out.str()), base = key_values(base_out.str());
  const double dice_pre = std::stod(pre.at("dice_mean")), dice_base = std::stod(base.at("dice_mean"));
  const double secs = seconds_since(t0);
  const bool pass = dice_pre >= dice_base && secs < 1800.0;
  return {pass, "5-fold CV on " + pre.at("n") + " samples: pretrained mean Dice " + fmt(dice_pre, 5) + ", baseline " +
                    fmt(dice_base, 5) + "; " + fmt(secs, 4) + " s (limit 1800 s, localizer " +
                    (desk.prepare_seconds > 0 ? fmt(desk.prepare_seconds, 4) + " s" : std::string("cached")) + ")"};
}

// ---------------------------------------------------------------------------
// 5. fraction sweep over three base seeds

struct CsvRow {
  double mean_pre = 0, mean_base = 0, p = 1;
};

std::map<int, CsvRow> read_sweep_csv(const fs::path& p) {
  std::map<int, CsvRow> rows;
  std::istringstream is(slurp(p));
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw FormatError("bad sweep row: " + line);
    rows[std::stoi(f[0])] = {std::stod(f[1]), std::stod(f[3]), std::stod(f[7])};
  }
  return rows;
}

Outcome sweep_direction(const fs::path& work) {
  const Desk desk = prepare_desk(work);
  int held = 0, failed = 0;
  double slowest = 0.0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    if (held >= 2 || failed >= 2) break;
    ExperimentConfig cfg = desk.cfg;
    cfg.data_dir = desk.cfg.dataset_root();
    cfg.out_dir = work / ("sweep_seed" + std::to_string(seed));
    cfg.base_seed = seed;
    const auto t0 = Clock::now();
    std::ostringstream sink;
    cmd_sweep(cfg, desk.localizer, 1, sink);
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);
    const auto rows = read_sweep_csv(cfg.out_dir / "sweep.csv");
    const CsvRow lo = rows.at(10), hi = rows.at(100);
    const double gap_lo = lo.mean_pre - lo.mean_base, gap_hi = hi.mean_pre - hi.mean_base;
    const bool ok = gap_lo > 0 && lo.p < 0.05 && gap_lo > gap_hi && secs < 5400.0;
    (ok ? held : failed) += 1;
    std::cerr << "  seed " << seed << ": 10% pre " << lo.mean_pre << " base " << lo.mean_base << " p " << lo.p
              << "; 100% pre " << hi.mean_pre << " base " << hi.mean_base << "; " << secs << " s -> "
              << (ok ? "holds" : "fails") << "\n";
    detail += "seed " + std::to_string(seed) + " gap@10% " + fmt(gap_lo, 3) + " p " + fmt(lo.p, 3) + " gap@100% " +
              fmt(gap_hi, 3) + (ok ? " holds" : " fails") + "; ";
  }
  return {held >= 2, detail + "holds for " + std::to_string(held) + " seeds (need 2 of 3), slowest sweep " +
                         fmt(slowest, 4) + " s (limit 5400 s)"};
}

// ---------------------------------------------------------------------------
// 6. statistics oracle

Outcome statistics() {
  Rng rng(606);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + rng.index(80);
    const double effect = rng.uniform(-0.06, 0.06);
    const double spread = rng.uniform(0.005, 0.1);
    PairedScores s;
    for (std::size_t j = 0; j < n; ++j) {
      const double b = rng.uniform(0.5, 0.95);
      s.baseline.push_back(b);
      s.pretrained.push_back(b + effect + spread * rng.normal());
    }
    const auto r = paired_t_test(s);
    worst = std::max(worst, std::fabs(r.p - testsupport::two_sided_p_by_quadrature(r.t, r.df)));
  }
  const auto ex = paired_t_test({{2, 3, 4}, {1, 1, 1}});
  const bool example_ok = std::fabs(ex.t - 3.4641) < 1e-4 && std::fabs(ex.p - 0.0742) < 1e-4;
  return {worst <= 1e-6 && example_ok, "max |p - oracle| over 100 inputs " + fmt(worst, 3) +
                                           " (limit 1e-6); worked example t " + fmt(ex.t, 8) + " p " + fmt(ex.p, 6)};
}

// ---------------------------------------------------------------------------
// 7. CLAHE oracle

Outcome clahe_oracle() {
  Rng rng(707);
  int mismatches = 0, compared = 0;
  for (int i = 0; i < 20; ++i) {
    RawImage img(16, 16, 1, 0);
    const int lo = static_cast<int>(rng.index(80)), hi = 128 + static_cast<int>(rng.index(128));
    for (auto& v : img.data) v = static_cast<std::uint8_t>(lo + rng.index(static_cast<std::size_t>(hi - lo + 1)));
    for (int tiles : {1, 2, 4, 8})
      for (double clip : {1.0, 2.0, 4.0, std::numeric_limits<double>::infinity()}) {
        ++compared;
        mismatches += !(clahe(img, tiles, clip) == testsupport::reference_clahe(img, tiles, clip));
      }
  }
  bool uniform_ok = true;
  for (int v : {0, 1, 77, 200, 255})
    for (int tiles : {1, 4, 8}) {
      const RawImage out = clahe(RawImage(16, 16, 1, static_cast<std::uint8_t>(v)), tiles, 2.0);
      for (auto p : out.data) uniform_ok = uniform_ok && p == out.data[0];
    }
  return {mismatches == 0 && uniform_ok, std::to_string(compared - mismatches) + "/" + std::to_string(compared) +
                                             " byte-exact (20 images x 4 grids x 4 clip limits); uniform images " +
                                             (uniform_ok ? "stay uniform" : "NOT uniform")};
}

// ---------------------------------------------------------------------------
// 8. sweep determinism through the command line

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

int run_cli(const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = quote(ODSEG_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >" + quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "small.cfg";
  std::ofstream(cfg) << "out_dir = " << (dir / "base").string()
                     << "\n"
                        "gen.loc_count = 64\n"
                        "gen.seg_count = 20\n"
                        "model.levels = 3\n"
                        "model.base_filters = 4\n"
                        "loc.epochs = 2\n"
                        "seg.epochs = 3\n"
                        "sweep.fractions = 10,50,100\n"
                        "base_seed = 7\n";
  const std::string c = cfg.string();
  const std::string data = "data_dir=" + (dir / "base" / "data").string();
  if (run_cli({"--config", c, "gen"}, dir / "gen.log") != 0 ||
      run_cli({"--config", c, "train-localizer"}, dir / "loc.log") != 0)
    return {false, "setup commands failed, see " + dir.string()};
  const std::string ckpt = (dir / "base" / "localizer.ckpt").string();
  struct Run {
    std::string name;
    int jobs;
  };
  const std::vector<Run> runs{{"a", 1}, {"b", 1}, {"c", 2}, {"d", 3}};
  for (const auto& r : runs) {
    const int code = run_cli({"--config", c, "--set", "out_dir=" + (dir / r.name).string(), "--set", data, "sweep",
                              "--localizer", ckpt, "--jobs", std::to_string(r.jobs)},
                             dir / (r.name + ".log"));
    if (code != 0) return {false, "sweep run " + r.name + " exited with " + std::to_string(code)};
  }
  bool same = true;
  std::size_t bytes = 0;
  for (const char* file : {"sweep.csv", "sweep.svg", "sweep_scores.csv"}) {
    const std::string ref = slurp(dir / "a" / file);
    bytes += ref.size();
    for (const auto& r : runs) same = same && !ref.empty() && slurp(dir / r.name / file) == ref;
  }
  return {same, "4 sweeps (--jobs 1, 1, 2, 3): sweep.csv, sweep.svg and sweep_scores.csv " +
                    std::string(same ? "byte-identical" : "DIFFER") + " (" + std::to_string(bytes) + " bytes each run)"};
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected;
  std::string work = ODSEG_ACCEPTANCE_WORK;
  bool prepare = false;
  app.add_option("criteria", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--work", work, "Directory for cached data and run outputs");
  app.add_flag("--prepare", prepare, "Generate the default dataset and localizer, then exit");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty() && !prepare) selected = {1, 2, 3, 4, 5, 6, 7, 8};
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](const std::string& label, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const std::string line = (o.pass ? "[PASS] " : "[FAIL] ") + label + ": " + o.detail;
    std::cout << line << std::endl;
    std::ofstream(fs::path(work) / "results.txt", std::ios::app) << line << "\n";
    failures += !o.pass;
  };

  if (prepare) report("localizer goal", [&] { return localizer_goal(prepare_desk(work)); });
  for (int n : selected) {
    const std::string label = "criterion " + std::to_string(n);
    switch (n) {
      case 1: report(label, gradients); break;
      case 2: report(label, freeze_invariant); break;
      case 3: report(label, overfit); break;
      case 4: report(label, [&] { return full_data_direction(work); }); break;
      case 5: report(label, [&] { return sweep_direction(work); }); break;
      case 6: report(label, statistics); break;
      case 7: report(label, clahe_oracle); break;
      case 8: report(label, [&] { return determinism(work); }); break;
    }
  }
  return failures == 0 ? 0 : 1;
}
