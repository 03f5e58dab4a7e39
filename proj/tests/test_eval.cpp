#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/eval.hpp"

using namespace xmaml;

namespace {

ExperimentData small_family(std::uint64_t seed) {
  SyntheticFamilySpec spec;
  spec.names = {"en", "a", "b", "c"};
  spec.num_languages = 4;
  spec.feature_bits = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  spec.base_seed = seed;
  spec.noise_std = 0.2;
  auto make = [&](const char* label, std::size_t n) {
    SyntheticFamilySpec s = spec;
    s.samples_per_language = n;
    s.sample_seed = derive_seed(seed, label);
    return gen_synthetic_family(s);
  };
  return ExperimentData{make("train", 200).restrict_to("en"), make("dev", 40), make("test", 60)};
}

SweepConfig small_sweep(std::uint64_t seed) {
  SweepConfig cfg;
  cfg.model = testutil::mlp(8, {8}, 2);
  cfg.pretrain.epochs = 3;
  cfg.pretrain.lr = 1e-2;
  cfg.meta.alpha = 0.01;
  cfg.meta.beta = 0.003;
  cfg.meta.meta_iterations = 3;
  cfg.meta.num_runs = 2;
  cfg.meta.k = 8;
  cfg.meta.q = 8;
  cfg.plan = LanguagePlan{"en", {"a", "b", "c"}, {}};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("accuracy, ties and evaluate") {
  const int labels[] = {0, 1, 1, 0, 1};
  const int preds[] = {0, 1, 0, 1, 1};
  CHECK(accuracy(labels, labels) == 1.0);
  CHECK(accuracy(preds, labels) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(predict_classes(Tensor::matrix(1, 2, {0.5, 0.5}))[0] == 0);
  CHECK(predict_classes(Tensor::matrix(1, 3, {0.1, 0.7, 0.7}))[0] == 1);

  Model m = init_model(testutil::mlp(2, {}, 2), 0);
  m.params = ParamVector({Segment{"layer0.weight", Tensor::matrix(2, 2, {-1, 1, 0, 0})},
                          Segment{"layer0.bias", Tensor::vector({0, 0})}});
  Corpus c(2, TaskKind::classification, 2);
  c.add({"x", {1.0, 0.0}, 1.0});
  c.add({"x", {-1.0, 0.0}, 0.0});
  c.add({"x", {2.0, 5.0}, 1.0});
  c.add({"x", {0.0, 1.0}, 1.0});
  c.add({"y", {1.0, 1.0}, 0.0});
  const EvalResult r = evaluate(m, c, "x", Metric::accuracy);
  // The last x row ties at 0 and goes to class 0.
  CHECK(r.value == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.num_runs == 1);
  CHECK_THROWS_AS(evaluate(m, c, "zz", Metric::accuracy), EmptyGroupError);
  CHECK_THROWS_AS(evaluate(m, Corpus(2, TaskKind::classification, 2), "x", Metric::accuracy), EmptyGroupError);
}

TEST_CASE("macro_f1 examples") {
  const int perfect[] = {0, 1, 2, 1};
  CHECK(macro_f1(perfect, perfect, 3) == 1.0);
  const int labels[] = {0, 0, 1, 1};
  const int preds[] = {0, 1, 0, 1};
  CHECK(macro_f1(preds, labels, 2) == doctest::Approx(0.5).epsilon(1e-15));
  const int l2[] = {0, 1};
  const int p2[] = {0, 0};
  CHECK(macro_f1(p2, l2, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(macro_f1(std::span<const int>(), std::span<const int>(), 2), EmptyInputError);
}

TEST_CASE("EvalResult mean of runs") {
  const EvalResult r = EvalResult::from_runs("t", Metric::accuracy, {0.5, 0.7, 0.9});
  CHECK(r.value == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(r.num_runs == 3);
}

TEST_CASE("few_shot_eval: zero epochs, separable fit, determinism") {
  const ExperimentData data = small_family(1);
  const Model m = init_model(testutil::mlp(8, {8}, 2), 3);
  FineTuneConfig ft;
  ft.epochs = 0;
  const EvalResult zero = evaluate(m, data.test, "a", Metric::accuracy);
  const EvalResult few0 = few_shot_eval(m, data.dev, data.test, "a", ft, Metric::accuracy);
  CHECK(zero.value == few0.value);

  Corpus sep(2, TaskKind::classification, 2);
  Rng rng(2);
  for (int i = 0; i < 60; ++i) {
    const double x = rng.uniform(-1, 1);
    sep.add({"t", {x + (x > 0 ? 0.3 : -0.3), rng.uniform(-1, 1)}, x > 0 ? 1.0 : 0.0});
  }
  const Model lin = init_model(testutil::mlp(2, {}, 2), 1);
  ft.epochs = 200;
  ft.lr = 0.05;
  ft.batch_size = 32;
  CHECK(few_shot_eval(lin, sep, sep, "t", ft, Metric::accuracy).value == 1.0);

  ft.epochs = 2;
  ft.seed = 9;
  const double a = few_shot_eval(m, data.dev, data.test, "b", ft, Metric::accuracy).value;
  CHECK(few_shot_eval(m, data.dev, data.test, "b", ft, Metric::accuracy).value == a);
}

TEST_CASE("aggregate_avg_max examples") {
  const std::pair<std::string, double> one[] = {{"x", 0.4}};
  const RowAggregate r1 = aggregate_scores("t", one);
  CHECK(r1.avg == r1.max);

  const std::pair<std::string, double> published[] = {{"zh", 82.09}, {"ar", 81.68}, {"bg", 81.79}};
  const RowAggregate r2 = aggregate_scores("en", published);
  CHECK(r2.max == 82.09);
  CHECK(r2.argmax_aux == "zh");

  const std::pair<std::string, double> simple[] = {{"c", 1.0}, {"b", 2.0}, {"a", 3.0}};
  const RowAggregate r3 = aggregate_scores("t", simple);
  CHECK(r3.avg == 2.0);
  CHECK(r3.max == 3.0);

  const std::pair<std::string, double> tie[] = {{"z", 3.0}, {"m", 3.0}, {"q", 1.0}};
  CHECK(aggregate_scores("t", tie).argmax_aux == "m");

  CHECK_THROWS_AS(aggregate_scores("t", std::span<const std::pair<std::string, double>>()), EmptyRowError);

  DeltaMatrix m;
  m.targets = {"t"};
  m.auxiliaries = {"t", "u"};
  m.deltas = {{std::nullopt, std::nullopt}};
  m.baseline = {EvalResult::from_runs("t", Metric::accuracy, {0.5})};
  CHECK_THROWS_AS(aggregate_avg_max(m), EmptyRowError);
}

TEST_CASE("aggregate_avg_max stays between row min and max") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    DeltaMatrix m;
    m.targets = {"a", "b", "c"};
    m.auxiliaries = {"a", "b", "c", "d"};
    for (std::size_t t = 0; t < 3; ++t) {
      m.baseline.push_back(EvalResult::from_runs(m.targets[t], Metric::accuracy, {rng.uniform()}));
      std::vector<std::optional<double>> row;
      for (std::size_t a = 0; a < 4; ++a) {
        if (a == t) row.emplace_back();
        else row.emplace_back(rng.normal() * 0.1);
      }
      m.deltas.push_back(row);
    }
    for (const auto& agg : aggregate_avg_max(m)) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t a = 0; a < 4; ++a) {
        if (auto d = m.delta(agg.target, m.auxiliaries[a])) {
          const double v = m.baseline_for(agg.target).value + *d;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      CHECK(agg.avg >= lo - 1e-15);
      CHECK(agg.avg <= hi + 1e-15);
      CHECK(agg.max == hi);
    }
  }
}

TEST_CASE("sweep_single_aux: zero iterations gives an all-zero matrix with an empty diagonal") {
  const ExperimentData data = small_family(2);
  SweepConfig cfg = small_sweep(2);
  cfg.meta.meta_iterations = 0;
  for (Mode mode : {Mode::zero, Mode::few}) {
    cfg.mode = mode;
    cfg.finetune.epochs = 1;
    const DeltaMatrix m = sweep_single_aux(data, cfg);
    REQUIRE(m.targets.size() == 3);
    REQUIRE(m.auxiliaries.size() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(m.baseline[t].num_runs == 2);
      for (std::size_t a = 0; a < 3; ++a) {
        if (t == a) CHECK_FALSE(m.deltas[t][a].has_value());
        else CHECK(*m.deltas[t][a] == 0.0);
      }
    }
  }
}

TEST_CASE("sweep_single_aux: deterministic and csv round trip") {
  const ExperimentData data = small_family(3);
  const SweepConfig cfg = small_sweep(3);
  const DeltaMatrix a = sweep_single_aux(data, cfg);
  const DeltaMatrix b = sweep_single_aux(data, cfg);
  CHECK(a.deltas == b.deltas);

  const auto dir = testutil::scratch("eval_csv");
  write_delta_matrix(a, dir / "m.csv", dir / "base.csv");
  const DeltaMatrix back = read_delta_matrix(dir / "m.csv", dir / "base.csv");
  CHECK(back.targets == a.targets);
  CHECK(back.auxiliaries == a.auxiliaries);
  CHECK(back.deltas == a.deltas);
  for (std::size_t t = 0; t < a.targets.size(); ++t) {
    CHECK(back.baseline[t].value == a.baseline[t].value);
    CHECK(back.baseline[t].per_run_values == a.baseline[t].per_run_values);
  }
  CHECK(read_delta_matrix(dir / "m.csv").deltas == a.deltas);
  write_aggregates(aggregate_avg_max(a), dir / "agg.csv");
  CHECK(std::filesystem::exists(dir / "agg.csv"));
}

TEST_CASE("sweep_pair_aux: one pair per target on a 3-group pool, canonical pairs") {
  const ExperimentData data = small_family(4);
  const SweepConfig cfg = small_sweep(4);
  const PairSweep ps = sweep_pair_aux(data, cfg);
  CHECK(ps.scores.size() == 3);
  CHECK(ps.best.size() == 3);
  for (const auto& p : ps.best) {
    CHECK(p.first < p.second);
    CHECK(p.target != p.first);
    CHECK(p.target != p.second);
  }
  // (a, b) and (b, a) are one experiment.
  const Model pre = pretrain_for_sweep(data, cfg);
  const std::string ab[] = {"a", "b"};
  const std::string ba[] = {"b", "a"};
  const std::string tc[] = {"c"};
  const auto r1 = auxiliary_results(pre, data, ab, tc, cfg);
  const auto r2 = auxiliary_results(pre, data, ba, tc, cfg);
  CHECK(r1[0].per_run_values == r2[0].per_run_values);

  const auto dir = testutil::scratch("eval_pairs");
  write_best_pairs(ps, dir / "best.csv");
  CHECK(std::filesystem::exists(dir / "best.csv"));

  SweepConfig two = cfg;
  two.plan.pool = {"a", "b"};
  CHECK_THROWS_AS(sweep_pair_aux(data, two), ArgumentError);
}

TEST_CASE("paired baseline: shifting every run shifts no delta") {
  DeltaMatrix m;
  m.targets = {"t"};
  m.auxiliaries = {"u", "v"};
  m.deltas = {{0.1, -0.2}};
  m.baseline = {EvalResult::from_runs("t", Metric::accuracy, {0.5, 0.6})};
  const auto before = aggregate_avg_max(m)[0];
  DeltaMatrix shifted = m;
  shifted.baseline = {EvalResult::from_runs("t", Metric::accuracy, {0.6, 0.7})};
  const auto after = aggregate_avg_max(shifted)[0];
  CHECK(after.max - before.max == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(after.argmax_aux == before.argmax_aux);
}
