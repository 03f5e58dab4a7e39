#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "test_util.hpp"
#include "xmaml/csv.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/rng.hpp"
#include "xmaml/stats.hpp"
#include "xmaml/typology.hpp"

using namespace xmaml;
namespace fs = std::filesystem;

namespace {

DeltaMatrix square_matrix(const std::vector<std::string>& langs) {
  DeltaMatrix m;
  m.targets = langs;
  m.auxiliaries = langs;
  m.deltas.assign(langs.size(), std::vector<std::optional<double>>(langs.size()));
  for (std::size_t t = 0; t < langs.size(); ++t) {
    for (std::size_t a = 0; a < langs.size(); ++a) {
      if (t != a) m.deltas[t][a] = 0.0;
    }
    m.baseline.push_back(EvalResult::from_runs(langs[t], Metric::accuracy, {0.5}));
  }
  return m;
}

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("L" + std::to_string(i));
  return out;
}

std::vector<std::vector<double>> ten_points(std::uint64_t seed, std::vector<int>& labels) {
  Rng rng(seed);
  std::vector<std::vector<double>> xs;
  labels.clear();
  for (int i = 0; i < 10; ++i) {
    xs.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
    labels.push_back(static_cast<int>(rng.below(3)));
  }
  return xs;
}

}  // namespace

TEST_CASE("load_typology examples") {
  const fs::path dir = testutil::scratch("typology_load");
  csv::write_file(dir / "t.csv", "language,feature,value\nen,81A,SVO\nde,81A,SOV\nen,85A,Prep\n");
  const TypologyTable t = load_typology(dir / "t.csv");
  CHECK(t.cell_count() == 3);
  CHECK(t.value("de", "81A") == std::optional<std::string>("SOV"));
  CHECK_FALSE(t.value("de", "85A").has_value());
  CHECK_FALSE(t.value("fr", "81A").has_value());
  CHECK(t.domain("81A") == std::vector<std::string>{"SOV", "SVO"});
  CHECK(t.features() == std::vector<std::string>{"81A", "85A"});

  csv::write_file(dir / "dup.csv", "language,feature,value\nen,81A,SVO\nde,81A,SOV\nen,81A,VSO\n");
  try {
    load_typology(dir / "dup.csv");
    FAIL("expected DuplicateCellError");
  } catch (const DuplicateCellError& e) {
    CHECK(e.first_line() == 2);
    CHECK(e.second_line() == 4);
  }
  csv::write_file(dir / "bad.csv", "language,feature,value\nen,81A\n");
  CHECK_THROWS_AS(load_typology(dir / "bad.csv"), FormatError);
  CHECK_THROWS_AS(load_typology(dir / "missing.csv"), IoError);

  save_typology(t, dir / "back.csv");
  const TypologyTable back = load_typology(dir / "back.csv");
  CHECK(back.cell_count() == 3);
  CHECK(back.value("en", "85A") == std::optional<std::string>("Prep"));
}

TEST_CASE("fit_logistic examples") {
  // Constant labels predict that label everywhere.
  const std::vector<std::vector<double>> xs{{-1.0}, {0.0}, {2.0}, {3.0}};
  const std::vector<int> same{1, 1, 1, 1};
  const LogisticModel c = fit_logistic(xs, same);
  for (const auto& x : xs) CHECK(c.predict(x) == 1);

  // Linearly separable 1-D data is fit perfectly.
  const std::vector<std::vector<double>> line{{-3}, {-2}, {-1}, {-0.5}, {0.5}, {1}, {2}, {3}};
  const std::vector<int> side{0, 0, 0, 0, 1, 1, 1, 1};
  const LogisticModel s = fit_logistic(line, side, {0.5, 500, 1e-4});
  for (std::size_t i = 0; i < line.size(); ++i) CHECK(s.predict(line[i]) == side[i]);

  CHECK_THROWS_AS(fit_logistic({{1.0}, {std::numeric_limits<double>::quiet_NaN()}}, std::vector<int>{0, 1}),
                  NonFiniteError);
  CHECK_THROWS_AS(fit_logistic({{1.0}, {2.0}}, std::vector<int>{0, -1}), LabelError);
  CHECK_THROWS_AS(fit_logistic({{1.0}, {2.0, 3.0}}, std::vector<int>{0, 1}), StructureError);
  CHECK_THROWS_AS(fit_logistic({}, std::vector<int>{}), ArgumentError);
}

TEST_CASE("fit_logistic loss is non-increasing at lr 0.1") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<int> labels;
    const auto xs = ten_points(seed, labels);
    std::vector<double> trace;
    const LogisticModel m = fit_logistic(xs, labels, {0.1, 100, 1e-4}, &trace);
    REQUIRE(trace.size() == 101);
    CHECK(trace.front() == doctest::Approx(std::log(static_cast<double>(m.num_classes))));
    for (std::size_t e = 1; e < trace.size(); ++e) CHECK(trace[e] <= trace[e - 1] + 1e-15);
    CHECK(trace.back() == doctest::Approx(logistic_objective(m, xs, labels, 1e-4)).epsilon(1e-12));
  }
}

TEST_CASE("baseline examples") {
  const std::vector<std::string> train{"A", "A", "B"};
  const std::vector<std::string> test{"A", "B"};
  CHECK(baseline_most_frequent(train, test) == 0.5);
  const std::vector<std::string> tie{"B", "A"};
  const std::vector<std::string> a_only{"A"};
  CHECK(baseline_most_frequent(tie, a_only) == 1.0);

  const std::vector<std::string> half{"A", "B"};
  CHECK(baseline_distributional(half, a_only, 3, 10000) == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::fabs(baseline_distributional(half, a_only, 3, 10000) - 0.5) <= 0.02);
  CHECK(baseline_distributional(train, test, 8, 50) == baseline_distributional(train, test, 8, 50));

  const std::vector<std::string> none;
  CHECK_THROWS_AS(baseline_most_frequent(none, test), EmptyInputError);
  CHECK_THROWS_AS(baseline_distributional(train, none, 1, 10), EmptyInputError);
}

TEST_CASE("condition_value_prediction examples") {
  const auto langs = names(6);
  const DeltaMatrix zero = square_matrix(langs);
  TypologyTable same;
  for (const auto& l : langs) same.set(l, "F", "x");
  for (double holdout : {0.0, 0.25}) {
    ConditionOptions opts;
    opts.holdout_fraction = holdout;
    const ConditionOutcome o = condition_value_prediction(same, zero, "F", 1, opts);
    CHECK(o.model_accuracy == 1.0);
    CHECK(o.most_frequent_accuracy == 1.0);
    CHECK(o.instances == 6);
  }

  TypologyTable three;
  for (int i = 0; i < 3; ++i) three.set(langs[static_cast<std::size_t>(i)], "F", "x");
  CHECK_THROWS_AS(condition_value_prediction(three, zero, "F", 1), InsufficientLanguagesError);

  ConditionOptions bad;
  bad.holdout_fraction = 1.0;
  CHECK_THROWS_AS(condition_value_prediction(same, zero, "F", 1, bad), ArgumentError);
}

TEST_CASE("planted value dependence beats the most-frequent baseline") {
  // Languages with value "hi" gain about 5 points as targets.
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto langs = names(10);
    std::vector<std::string> values;
    for (std::size_t i = 0; i < langs.size(); ++i) values.push_back(i % 2 == 0 ? "hi" : "lo");
    rng.shuffle(values);
    TypologyTable t;
    DeltaMatrix m = square_matrix(langs);
    for (std::size_t i = 0; i < langs.size(); ++i) {
      t.set(langs[i], "F", values[i]);
      for (std::size_t j = 0; j < langs.size(); ++j) {
        if (i == j) continue;
        m.deltas[i][j] = (values[i] == "hi" ? 0.025 : -0.025) + 0.01 * rng.normal();
      }
    }
    ConditionOptions loo;
    loo.holdout_fraction = 0.0;
    const ConditionOutcome o = condition_value_prediction(t, m, "F", seed, loo);
    wins += o.model_accuracy > o.most_frequent_accuracy;
  }
  CHECK(wins >= 9);
}

TEST_CASE("condition_match_prediction examples") {
  const auto langs = names(5);
  DeltaMatrix m = square_matrix(langs);
  TypologyTable same;
  for (const auto& l : langs) same.set(l, "F", "x");
  const ConditionOutcome all = condition_match_prediction(same, m, "F", 2);
  CHECK(all.model_accuracy == 1.0);
  CHECK(all.most_frequent_accuracy == 1.0);
  CHECK(all.instances == 20);

  // delta = +1 for matching pairs, -1 otherwise.
  TypologyTable split;
  const std::vector<std::string> v{"a", "a", "b", "b", "b"};
  for (std::size_t i = 0; i < langs.size(); ++i) split.set(langs[i], "F", v[i]);
  for (std::size_t i = 0; i < langs.size(); ++i) {
    for (std::size_t j = 0; j < langs.size(); ++j) {
      if (i != j) m.deltas[i][j] = v[i] == v[j] ? 1.0 : -1.0;
    }
  }
  for (double holdout : {0.0, 0.25}) {
    ConditionOptions opts;
    opts.holdout_fraction = holdout;
    for (std::uint64_t s = 0; s < 5; ++s) {
      CHECK(condition_match_prediction(split, m, "F", s, opts).model_accuracy == 1.0);
    }
  }

  TypologyTable sparse;
  sparse.set("L0", "F", "a");
  sparse.set("L1", "F", "a");
  CHECK_THROWS_AS(condition_match_prediction(sparse, m, "F", 0), InsufficientLanguagesError);
}

TEST_CASE("random deltas give no spurious match certainty") {
  const auto langs = names(8);
  double total = 0.0;
  int inside = 0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    Rng rng(derive_seed(77, "resample", {r}));
    std::vector<std::string> v{"a", "a", "a", "a", "b", "b", "b", "b"};
    rng.shuffle(v);
    TypologyTable t;
    DeltaMatrix m = square_matrix(langs);
    for (std::size_t i = 0; i < langs.size(); ++i) {
      t.set(langs[i], "F", v[i]);
      for (std::size_t j = 0; j < langs.size(); ++j) {
        if (i != j) m.deltas[i][j] = rng.normal();
      }
    }
    ConditionOptions loo;
    loo.holdout_fraction = 0.0;
    const double acc = condition_match_prediction(t, m, "F", r, loo).model_accuracy;
    total += acc;
    inside += acc >= 0.3 && acc <= 0.7;
  }
  MESSAGE("mean accuracy " << total / 100.0 << ", inside [0.3, 0.7]: " << inside << "/100");
  CHECK(total / 100.0 >= 0.3);
  CHECK(total / 100.0 <= 0.7);
  CHECK(inside == 100);
}

TEST_CASE("paired t-test oracles") {
  const std::vector<double> d{1, 2, 3, 4, 5};
  const std::vector<double> z(5, 0.0);
  const TTestResult r = paired_t_test(d, z);
  CHECK(r.df == 4);
  CHECK(r.t == doctest::Approx(std::sqrt(18.0)).epsilon(1e-14));
  CHECK(std::fabs(r.p - 0.0132) <= 0.0005);

  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> a(12), b(12);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const TTestResult ab = paired_t_test(a, b);
    const TTestResult ba = paired_t_test(b, a);
    CHECK(std::fabs(ab.p - ba.p) <= 1e-12);
    CHECK(ab.t == doctest::Approx(-ba.t).epsilon(1e-14));
  }

  for (double t : {0.5, 1.0, 1.96, 2.5, 3.0}) {
    const double normal = 2.0 * (1.0 - normal_cdf(t));
    CHECK(std::fabs(student_t_two_sided_p(t, 200) - normal) <= 2e-3);
    CHECK(std::fabs(student_t_two_sided_p(t, 5000) - normal) <= 1e-4);
  }
  CHECK(student_t_cdf(0.0, 7) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(regularized_incomplete_beta(2.0, 3.0, 0.4) == doctest::Approx(0.5248).epsilon(1e-12));

  const std::vector<double> ones(4, 1.0), zeros(4, 0.0);
  const TTestResult zv = paired_t_test(ones, zeros);
  CHECK(zv.zero_variance);
  CHECK(zv.p == 0.0);
  CHECK(std::isinf(zv.t));
  const TTestResult flat = paired_t_test(ones, ones);
  CHECK(flat.t == 0.0);
  CHECK(flat.p == 1.0);

  CHECK_THROWS_AS(paired_t_test(std::vector<double>{1.0}, std::vector<double>{0.0}),
                  InsufficientSamplesError);
  CHECK_THROWS_AS(paired_t_test(ones, std::vector<double>{1.0, 2.0}), StructureError);
}

TEST_CASE("corrected resampled t-test") {
  const std::vector<double> d{1, 2, 3, 4, 5};
  const std::vector<double> z(5, 0.0);
  const TTestResult plain = paired_t_test(d, z);
  const TTestResult r0 = corrected_resampled_t_test(d, z, 0.0);
  CHECK(r0.t == doctest::Approx(plain.t).epsilon(1e-14));
  CHECK(r0.p == doctest::Approx(plain.p / 2.0).epsilon(1e-12));
  const TTestResult r = corrected_resampled_t_test(d, z, 0.25);
  CHECK(r.t == doctest::Approx(plain.t * std::sqrt(0.2 / 0.45)).epsilon(1e-14));
  CHECK(r.p > r0.p);
  // One-sided: a worse model is never significant.
  const TTestResult worse = corrected_resampled_t_test(z, d, 0.25);
  CHECK(worse.p == doctest::Approx(1.0 - r.p).epsilon(1e-12));
  const std::vector<double> ones(4, 1.0), zeros(4, 0.0);
  CHECK(corrected_resampled_t_test(zeros, ones, 0.25).p == 1.0);
  CHECK(corrected_resampled_t_test(ones, zeros, 0.25).p == 0.0);
  CHECK_THROWS_AS(corrected_resampled_t_test(d, z, -1.0), ArgumentError);
}

TEST_CASE("bonferroni") {
  CHECK(bonferroni(0.05, 200) == 0.00025);
  CHECK(bonferroni(0.05, 1) == 0.05);
  CHECK(bonferroni(0.05, 10) == doctest::Approx(0.005).epsilon(1e-15));
  CHECK_THROWS_AS(bonferroni(0.05, 0), ArgumentError);
  CHECK_THROWS_AS(bonferroni(0.0, 3), ArgumentError);
  CHECK_THROWS_AS(bonferroni(1.0, 3), ArgumentError);
  for (std::size_t m = 1; m < 300; ++m) CHECK(bonferroni(0.05, m + 1) < bonferroni(0.05, m));

  // Reject set at the corrected cutoff is a subset of the one at the base cutoff.
  Rng rng(12);
  for (int k = 0; k < 200; ++k) {
    const double p = rng.uniform() * 0.1;
    if (p < bonferroni(0.05, 20)) CHECK(p < 0.05);
  }
}

TEST_CASE("feature scan on a zero matrix flags nothing") {
  const auto langs = names(8);
  const DeltaMatrix zero = square_matrix(langs);
  TypologyTable t;
  Rng rng(5);
  for (int f = 0; f < 4; ++f) {
    for (const auto& l : langs) t.set(l, "F" + std::to_string(f), rng.below(2) ? "a" : "b");
  }
  // Only three languages carry G: too few for condition (value), so m counts
  // the other four; condition (match) still has six ordered pairs.
  for (int i = 0; i < 3; ++i) t.set(langs[static_cast<std::size_t>(i)], "G", "a");
  for (Condition c : {Condition::value, Condition::match}) {
    const ScanReport rep = run_feature_scan(t, zero, c, 9);
    const std::size_t m = c == Condition::value ? 4 : 5;
    CHECK(rep.skipped.size() == 5 - m);
    REQUIRE(rep.results.size() == m);
    for (std::size_t i = 0; i < rep.results.size(); ++i) {
      const TestResult& r = rep.results[i];
      CHECK_FALSE(r.significant);
      CHECK(r.num_tests == m);
      CHECK(r.corrected_cutoff == 0.05 / static_cast<double>(m));
      CHECK(r.degrees_of_freedom == 19);
      CHECK(r.significant == (r.p_value < r.corrected_cutoff));
      if (i > 0) CHECK(rep.results[i - 1].p_value <= r.p_value);
    }
  }

  ScanOptions loo;
  loo.condition.holdout_fraction = 0.0;
  CHECK_THROWS_AS(run_feature_scan(t, zero, Condition::value, 9, loo), ArgumentError);
}

TEST_CASE("feature scan finds a planted feature and round-trips") {
  PlantedTypologySpec spec;
  spec.seed = 4;
  const PlantedTypology pt = make_planted_typology(spec);
  CHECK(pt.table.languages().size() == 24);
  CHECK(pt.table.features().size() == 20);
  const ScanReport rep = run_feature_scan(pt.table, pt.matrix, Condition::value, 4);
  REQUIRE(rep.results.size() == 20);
  CHECK(rep.results[0].feature_id == "P");
  CHECK(rep.results[0].significant);
  CHECK(rep.results[0].corrected_cutoff == 0.05 / 20);

  const ScanReport again = run_feature_scan(pt.table, pt.matrix, Condition::value, 4);
  for (std::size_t i = 0; i < rep.results.size(); ++i) {
    CHECK(again.results[i].feature_id == rep.results[i].feature_id);
    CHECK(again.results[i].p_value == rep.results[i].p_value);
  }

  const fs::path dir = testutil::scratch("typology_scan");
  write_scan_report(rep, dir / "scan.csv");
  const auto back = read_scan_report(dir / "scan.csv");
  REQUIRE(back.size() == rep.results.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].feature_id == rep.results[i].feature_id);
    CHECK(back[i].p_value == rep.results[i].p_value);
    CHECK(back[i].t_statistic == rep.results[i].t_statistic);
    CHECK(back[i].significant == rep.results[i].significant);
    CHECK(back[i].num_tests == 20);
  }
}
