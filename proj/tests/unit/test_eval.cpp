#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "../support/t_oracle.hpp"
#include "odseg/error.hpp"
#include "odseg/metrics.hpp"
#include "odseg/stats.hpp"
#include "odseg/sweep.hpp"

using namespace odseg;

namespace {

MaskLabel mask(int w, int h, std::vector<std::uint8_t> v) { return {w, h, std::move(v)}; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("euclidean error and localisation report") {
  CHECK(euclidean_error({3, 4}, {0, 0}) == 5.0);
  const auto r = localization_report({{3, 4}, {13, 24}}, {{0, 0}, {10, 20}});
  CHECK(r.mse == 12.5);
  CHECK(r.mean_euclidean == 5.0);
  CHECK(r.count == 2);
  CHECK_THROWS_AS(localization_report({{0, 0}}, {}), ShapeError);
}

TEST_CASE("threshold and dice") {
  const Tensor p = Tensor::from({1, 1, 1, 4}, {0.2, 0.5, 0.51, 0.9});
  CHECK(threshold_mask(p).values == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(threshold_mask(Tensor::from({2, 2}, {0.6, 0.1, 0.7, 0.0})).values == std::vector<std::uint8_t>{1, 0, 1, 0});

  const auto a = mask(2, 2, {1, 1, 0, 0}), b = mask(2, 2, {1, 0, 0, 0});
  CHECK(dice_coefficient(a, b) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(dice_coefficient(a, a) == 1.0);
  CHECK(dice_coefficient(mask(2, 2, {0, 0, 0, 0}), mask(2, 2, {0, 0, 0, 0})) == 1.0);
  CHECK(dice_coefficient(mask(2, 2, {0, 0, 1, 1}), a) == 0.0);
  CHECK_THROWS_AS(dice_coefficient(a, mask(4, 1, {1, 1, 0, 0})), ShapeError);
}

TEST_CASE("mean and sample standard deviation") {
  CHECK(mean({1, 2, 3, 4}) == 2.5);
  CHECK(sample_std({2, 4, 4, 4, 5, 5, 7, 9}) == doctest::Approx(std::sqrt(32.0 / 7.0)));
  CHECK(sample_std({3}) == 0.0);
}

TEST_CASE("paired t-test worked cases") {
  const auto zero = paired_t_test({{1, 0}, {0, 1}});
  CHECK(zero.t == 0.0);
  CHECK(zero.p == doctest::Approx(1.0));

  const auto r = paired_t_test({{2, 3, 4}, {1, 1, 1}});
  CHECK(r.df == 2);
  CHECK(r.t == doctest::Approx(3.4641016).epsilon(1e-7));
  CHECK(r.p == doctest::Approx(0.0741799).epsilon(1e-5));

  const auto same = paired_t_test({{0.5, 0.7}, {0.5, 0.7}});
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);
  CHECK_FALSE(same.degenerate);
  const auto shift = paired_t_test({{0.75, 0.5, 1.0}, {0.5, 0.25, 0.75}});
  CHECK(shift.degenerate);
  CHECK(shift.p == 0.0);
  CHECK(std::isinf(shift.t));

  CHECK_THROWS_AS(paired_t_test({{1}, {1}}), ParameterError);
  CHECK_THROWS_AS(paired_t_test({{1, 2}, {1}}), ShapeError);
}

TEST_CASE("t-test p-values agree with direct quadrature of the density") {
  Rng rng(17);
  for (int i = 0; i < 40; ++i) {
    const std::size_t n = 2 + rng.index(60);
    PairedScores s;
    const double effect = rng.uniform(-0.05, 0.05);
    for (std::size_t j = 0; j < n; ++j) {
      const double base = rng.uniform(0.6, 0.95);
      s.baseline.push_back(base);
      s.pretrained.push_back(base + effect + 0.04 * rng.normal());
    }
    const auto r = paired_t_test(s);
    INFO("n " << n << " t " << r.t);
    CHECK(std::fabs(r.p - testsupport::two_sided_p_by_quadrature(r.t, r.df)) <= 1e-6);

    const auto swapped = paired_t_test({s.baseline, s.pretrained});
    CHECK(swapped.t == doctest::Approx(-r.t).epsilon(1e-12));
    CHECK(swapped.p == doctest::Approx(r.p).epsilon(1e-12));
  }
  for (double t : {0.1, 1.0, 2.0, 5.0})
    for (double df : {1.0, 3.0, 30.0})
      CHECK(student_t_cdf(t, df) - student_t_cdf(-t, df) ==
            doctest::Approx(1.0 - testsupport::two_sided_p_by_quadrature(t, df)).epsilon(1e-9));
}

TEST_CASE("larger improvements give smaller p-values") {
  Rng rng(23);
  std::vector<double> base(30), noise(30);
  for (auto& v : base) v = rng.uniform(0.7, 0.9);
  for (auto& v : noise) v = 0.02 * rng.normal();
  const double centre = mean(noise);
  for (auto& v : noise) v -= centre;
  double last_p = 2.0;
  for (double shift : {0.0, 0.005, 0.01, 0.02, 0.04}) {
    PairedScores s{{}, base};
    for (std::size_t i = 0; i < base.size(); ++i) s.pretrained.push_back(base[i] + shift + noise[i]);
    const double p = paired_t_test(s).p;
    CHECK(p <= last_p);
    last_p = p;
  }
}

TEST_CASE("sweep seeds and training subsets") {
  std::set<std::uint64_t> seeds;
  for (int fold = 0; fold < 5; ++fold)
    for (int f = 10; f <= 100; f += 10)
      for (Scheme s : {Scheme::Pretrained, Scheme::Baseline}) seeds.insert(run_seed(1, fold, f, s));
  CHECK(seeds.size() == 100);

  SweepSettings s;
  const FoldPlan plan = sweep_folds(92, s);
  for (int fold = 0; fold < 5; ++fold) {
    std::vector<std::size_t> prev;
    for (int f = 10; f <= 100; f += 10) {
      const auto ids = fold_training_ids(plan, fold, f, s.base_seed);
      for (auto id : ids) CHECK(plan.assignment[id] != fold);
      std::set<std::size_t> cur(ids.begin(), ids.end());
      for (auto id : prev) CHECK(cur.count(id) == 1);
      prev = ids;
    }
    CHECK(prev.size() == plan.complement(fold).size());
  }
}

TEST_CASE("tiny sweep: schema and determinism across job counts") {
  SyntheticSpec spec;
  spec.image_size = 32;
  spec.seed = 6;
  const Dataset d = generate_dataset(spec, 10);
  PreprocessConfig pre;
  pre.target_size = 16;
  pre.clahe_tiles = 4;
  const TensorSet data = segmentation_set(d, all_ids(10), pre);

  SweepSettings s;
  s.fractions = {50, 100};
  s.model.input_size = 16;
  s.model.levels = 2;
  s.model.base_filters = 2;
  s.train.epochs = 2;
  s.train.batch_size = 4;
  Rng rng(1);
  const UNetModel loc = build_localizer(s.model, rng);

  CHECK_THROWS_AS(efficiency_sweep(data, nullptr, s), StateError);

  const RunReport one = efficiency_sweep(data, &loc, s);
  s.jobs = 3;
  const RunReport three = efficiency_sweep(data, &loc, s);

  std::ostringstream a, b;
  write_report_csv(a, one);
  write_report_csv(b, three);
  CHECK(a.str() == b.str());
  CHECK(render_svg(one) == render_svg(three));

  const auto rows = lines(a.str());
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "fraction,mean_pre,std_pre,mean_base,std_base,t,df,p");
  CHECK(rows[1].rfind("50,", 0) == 0);
  CHECK(rows[2].rfind("100,", 0) == 0);
  for (const auto& r : one.rows) {
    CHECK(r.test.df == 9);  // every image is scored once per scheme
    CHECK((r.mean_pre >= 0.0 && r.mean_pre <= 1.0));
  }
  CHECK(one.pretrained.size() == 10);
  for (std::size_t i = 0; i < one.pretrained.size(); ++i) {
    CHECK(one.pretrained[i].validation_ids == one.baseline[i].validation_ids);
    CHECK(one.pretrained[i].train_size == one.baseline[i].train_size);
  }
  const std::string svg = render_svg(one);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}
