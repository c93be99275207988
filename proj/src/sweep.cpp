#include "odseg/sweep.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "odseg/error.hpp"
#include "odseg/metrics.hpp"

namespace odseg {

std::string to_string(Scheme scheme) { return scheme == Scheme::Pretrained ? "pretrained" : "baseline"; }

std::uint64_t run_seed(std::uint64_t base_seed, int fold, int fraction, Scheme scheme) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(fold), static_cast<std::uint64_t>(fraction),
                                 static_cast<std::uint64_t>(scheme)});
}

FoldPlan sweep_folds(std::size_t n, const SweepSettings& s) {
  return kfold_split(n, s.folds, derive_seed(s.base_seed, {0xf01d}));
}

std::vector<std::size_t> fold_training_ids(const FoldPlan& plan, int fold, int fraction, std::uint64_t base_seed) {
  // One permutation per fold keeps the subsets nested across fractions.
  return subsample_fraction(plan.complement(fold), fraction,
                            derive_seed(base_seed, {0x5ab5, static_cast<std::uint64_t>(fold)}));
}

namespace {

TensorSet subset(const TensorSet& data, const std::vector<std::size_t>& ids) {
  TensorSet out;
  for (auto i : ids) {
    out.inputs.push_back(data.inputs.at(i));
    out.targets.push_back(data.targets.at(i));
  }
  return out;
}

}  // namespace

FoldRun run_fold(const TensorSet& data, const FoldPlan& plan, int fold, int fraction, Scheme scheme,
                 const UNetModel* localizer, const SweepSettings& s, bool monitor, UNetModel* trained) {
  const std::uint64_t seed = run_seed(s.base_seed, fold, fraction, scheme);
  const auto train_ids = fold_training_ids(plan, fold, fraction, s.base_seed);
  FoldRun run;
  run.fold = fold;
  run.fraction = fraction;
  run.scheme = scheme;
  run.train_size = train_ids.size();
  run.validation_ids = plan.members(fold);
  const TensorSet train = subset(data, train_ids);
  const TensorSet val = subset(data, run.validation_ids);

  TrainConfig cfg = s.train;
  cfg.seed = seed;
  TrainResult result;
  if (scheme == Scheme::Pretrained) {
    if (localizer == nullptr || localizer->kind() != ModelKind::Localizer)
      throw StateError("pretrained scheme needs a trained localizer checkpoint");
    UNetModel model = localizer->clone();
    Rng init(derive_seed(seed, {0x1417}));
    extend_to_unet(model, init);
    cfg.phase = Phase::Segment;
    result = train_segmenter(std::move(model), train, monitor ? &val : nullptr, cfg);
  } else {
    cfg.phase = Phase::Baseline;
    const ModelConfig mc = localizer ? localizer->config() : s.model;
    result = train_baseline(mc, train, monitor ? &val : nullptr, cfg);
  }
  run.curve = result.curve;
  const auto probs = predict_masks(result.model, val);
  for (std::size_t i = 0; i < probs.size(); ++i)
    run.dice.push_back(dice_coefficient(threshold_mask(probs[i]), threshold_mask(val.targets[i])));
  if (trained) *trained = std::move(result.model);
  return run;
}

PairedScores pooled_scores(const RunReport& report, int fraction) {
  PairedScores p;
  for (const auto& r : report.pretrained)
    if (r.fraction == fraction) p.pretrained.insert(p.pretrained.end(), r.dice.begin(), r.dice.end());
  for (const auto& r : report.baseline)
    if (r.fraction == fraction) p.baseline.insert(p.baseline.end(), r.dice.begin(), r.dice.end());
  return p;
}

RunReport efficiency_sweep(const TensorSet& data, const UNetModel* localizer, const SweepSettings& s) {
  if (localizer == nullptr) throw StateError("efficiency sweep needs a pretrained localizer checkpoint");
  if (localizer->kind() != ModelKind::Localizer) throw StateError("sweep checkpoint is not a localizer");
  if (s.fractions.empty()) throw ParameterError("sweep needs at least one fraction");
  const FoldPlan plan = sweep_folds(data.size(), s);

  struct Task {
    int fraction, fold;
    Scheme scheme;
  };
  std::vector<Task> tasks;
  for (int f : s.fractions)
    for (int k = 0; k < s.folds; ++k)
      for (Scheme sc : {Scheme::Pretrained, Scheme::Baseline}) tasks.push_back({f, k, sc});

  std::vector<FoldRun> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        results[i] = run_fold(data, plan, tasks[i].fold, tasks[i].fraction, tasks[i].scheme, localizer, s);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = tasks.size();
      }
    }
  };
  const int jobs = std::max(1, s.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  RunReport report;
  for (std::size_t i = 0; i < tasks.size(); ++i)
    (tasks[i].scheme == Scheme::Pretrained ? report.pretrained : report.baseline).push_back(std::move(results[i]));
  for (int f : s.fractions) {
    const PairedScores p = pooled_scores(report, f);
    FractionRow row;
    row.fraction = f;
    row.mean_pre = mean(p.pretrained);
    row.std_pre = sample_std(p.pretrained);
    row.mean_base = mean(p.baseline);
    row.std_base = sample_std(p.baseline);
    row.test = paired_t_test(p);
    report.rows.push_back(row);
  }
  return report;
}

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_report_csv(std::ostream& os, const RunReport& report) {
  os << "fraction,mean_pre,std_pre,mean_base,std_base,t,df,p\n";
  for (const auto& r : report.rows)
    os << r.fraction << ',' << num(r.mean_pre) << ',' << num(r.std_pre) << ',' << num(r.mean_base) << ','
       << num(r.std_base) << ',' << num(r.test.t) << ',' << r.test.df << ',' << num(r.test.p) << '\n';
}

std::string render_svg(const RunReport& report) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto sx = [&](double fraction) { return kLeft + (fraction - 10.0) / 90.0 * pw; };
  auto sy = [&](double dice) { return kTop + (1.0 - std::clamp(dice, 0.0, 1.0)) * ph; };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
     << kW << ' ' << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  for (int f = 10; f <= 100; f += 10)
    os << "<text x=\"" << fmt(sx(f)) << "\" y=\"" << kTop + ph + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << f << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double d = i / 5.0;
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(sy(d) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
       << fmt(d) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10
     << "\" font-size=\"12\" text-anchor=\"middle\">% training examples</text>\n";
  os << "<text x=\"15\" y=\"" << kTop + ph / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
     << kTop + ph / 2 << ")\">Dice</text>\n";

  struct Series {
    const char* name;
    const char* color;
    bool pretrained;
  };
  const Series series[] = {{"baseline (random init)", "#1f77b4", false}, {"pretrained encoder", "#ff7f0e", true}};
  int legend = 0;
  for (const auto& s : series) {
    std::string points;
    for (const auto& r : report.rows) {
      const double m = s.pretrained ? r.mean_pre : r.mean_base;
      const double sd = s.pretrained ? r.std_pre : r.std_base;
      const double x = sx(r.fraction);
      points += fmt(x) + "," + fmt(sy(m)) + " ";
      os << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(sy(m - sd)) << "\" x2=\"" << fmt(x) << "\" y2=\""
         << fmt(sy(m + sd)) << "\" stroke=\"" << s.color << "\" stroke-width=\"1\"/>\n";
      os << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(sy(m)) << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
    if (!points.empty()) points.pop_back();
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
    const double ly = kTop + 10 + 16 * legend++;
    os << "<line x1=\"" << kLeft + pw - 170 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw - 150 << "\" y2=\"" << ly
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + pw - 145 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace odseg
