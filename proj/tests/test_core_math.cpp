#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "test_util.hpp"
#include "xmaml/calculus.hpp"
#include "xmaml/errors.hpp"
#include "xmaml/losses.hpp"

using namespace xmaml;
using testutil::rel_err;

namespace {

ParamVector scalar_param(double v) { return ParamVector({Segment{"theta", Tensor::vector({v})}}); }

// Loss built from one elementwise op applied to the parameter, summed with
// fixed weights so every output element matters.
LossFn elementwise_loss(int which, const Tensor& weights) {
  return [which, weights](ad::Tape& tape, std::span<const ad::Var> p) {
    const ad::Var w = tape.constant(weights);
    ad::Var y;
    switch (which) {
      case 0: y = ad::tanh(p[0]); break;
      case 1: y = ad::exp(p[0]); break;
      case 2: y = p[0] * p[0]; break;
      case 3: y = ad::affine(p[0], -1.5, 0.25); break;
      case 4: y = ad::relu(p[0]); break;
      default: y = p[0] - ad::tanh(p[0]) + p[0] * ad::exp(p[0]); break;
    }
    return ad::sum_all(w * y);
  };
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), StructureError);
  const Tensor t = Tensor::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  Tensor nan = Tensor::vector({1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_FALSE(nan.all_finite());
}

TEST_CASE("param vector flatten round trip and unique names") {
  Rng rng(1);
  const Model m = init_model(testutil::mlp(4, {8}, 3), 7);
  CHECK(m.params.total_dim() == 67);
  const auto flat = m.params.flatten();
  CHECK(m.params.unflatten(flat) == m.params);
  CHECK_THROWS_AS(ParamVector({Segment{"a", Tensor::scalar(1)}, Segment{"a", Tensor::scalar(2)}}),
                  StructureError);
  CHECK_THROWS_AS(m.params + scalar_param(1.0), StructureError);
}

TEST_CASE("grad: closed forms") {
  const LossFn constant = [](ad::Tape& tape, std::span<const ad::Var>) {
    return tape.constant(Tensor::scalar(3.0));
  };
  CHECK(grad(constant, scalar_param(2.5)).flatten()[0] == 0.0);

  const LossFn square = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum_all(p[0] * p[0]); };
  CHECK(grad(square, scalar_param(3.0)).flatten()[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("grad: linear-model mse matches finite differences") {
  Tensor x = Tensor::matrix(3, 2, {1.0, 2.0, -1.0, 0.5, 0.3, -2.0});
  Tensor y = Tensor::matrix(3, 1, {1.0, -1.0, 0.5});
  ParamVector theta({Segment{"w", Tensor::matrix(2, 1, {0.3, -0.7})}, Segment{"b", Tensor::vector({0.1})}});
  const LossFn loss = [&](ad::Tape& tape, std::span<const ad::Var> p) {
    return mse(ad::add_bias(ad::matmul(tape.constant(x), p[0]), p[1]), y);
  };
  const auto fd = finite_difference_grad([&](const ParamVector& t) { return evaluate(loss, t); }, theta, 1e-5);
  CHECK(rel_err(grad(loss, theta), fd) <= 1e-6);
}

TEST_CASE("grad: every elementwise op matches finite differences over 20 seeds") {
  for (int op = 0; op < 6; ++op) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      std::vector<double> v(5), w(5);
      for (auto& e : v) {
        e = rng.normal();
        // Keep relu away from its kink.
        if (op == 4 && std::fabs(e) < 1e-2) e = 0.5;
      }
      for (auto& e : w) e = rng.normal();
      const ParamVector theta({Segment{"x", Tensor::vector(v)}});
      const LossFn loss = elementwise_loss(op, Tensor::vector(w));
      const auto fd =
          finite_difference_grad([&](const ParamVector& t) { return evaluate(loss, t); }, theta, 1e-5);
      worst = std::max(worst, rel_err(grad(loss, theta), fd));
    }
    CAPTURE(op);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("grad: matrix ops match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<double> a(6), b(12), w(8);
    for (auto& e : a) e = rng.normal();
    for (auto& e : b) e = rng.normal();
    for (auto& e : w) e = rng.normal();
    const ParamVector theta({Segment{"a", Tensor::matrix(2, 3, a)}, Segment{"b", Tensor::matrix(3, 4, b)}});
    const Tensor weights = Tensor::matrix(2, 4, w);
    const LossFn loss = [&](ad::Tape& tape, std::span<const ad::Var> p) {
      const ad::Var m = ad::matmul(p[0], p[1]);
      const ad::Var t = ad::transpose(ad::transpose(m));
      const ad::Var lse = ad::logsumexp_rows(t);
      const ad::Var rows = ad::sum_rows(t);
      return ad::sum_all(tape.constant(weights) * t) + ad::sum_all(lse) +
             ad::sum_all(ad::tanh(rows)) + ad::sum_all(ad::sum_cols(m * m));
    };
    const auto fd = finite_difference_grad([&](const ParamVector& t) { return evaluate(loss, t); }, theta, 1e-5);
    CAPTURE(seed);
    CHECK(rel_err(grad(loss, theta), fd) <= 1e-6);
  }
}

TEST_CASE("grad: non-finite loss names the segment") {
  const LossFn blowup = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum_all(ad::exp(p[0])); };
  ParamVector theta({Segment{"finite", Tensor::vector({0.0})}, Segment{"huge", Tensor::vector({1000.0})}});
  const LossFn loss = [&](ad::Tape& t, std::span<const ad::Var> p) {
    return blowup(t, p.subspan(1)) + ad::sum_all(p[0]);
  };
  try {
    grad(loss, theta);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("huge") != std::string::npos);
  }
}

TEST_CASE("hvp: closed forms") {
  const LossFn linear = [](ad::Tape& tape, std::span<const ad::Var> p) {
    return ad::sum_all(tape.constant(Tensor::vector({2.0, -1.0})) * p[0]);
  };
  ParamVector theta({Segment{"x", Tensor::vector({0.5, 1.5})}});
  ParamVector v({Segment{"x", Tensor::vector({3.0, -4.0})}});
  const auto h = hvp(linear, theta, v).flatten();
  CHECK(h[0] == 0.0);
  CHECK(h[1] == 0.0);

  const LossFn quad = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum_all(p[0] * p[0]); };
  CHECK(hvp(quad, scalar_param(0.7), scalar_param(5.0)).flatten()[0] == doctest::Approx(10.0).epsilon(1e-15));

  CHECK_THROWS_AS(hvp(quad, scalar_param(1.0), theta), StructureError);
}

TEST_CASE("hvp: random MLP matches finite differences of gradients") {
  const ModelSpec spec = testutil::mlp(4, {8}, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, "hvp"));
    const Model m = init_model(spec, seed);
    const Batch b = testutil::random_batch(rng, 6, 4, 3);
    const LossFn loss = [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(spec, p, b); };
    const ParamVector v = testutil::random_like(m.params, rng);
    const double eps = 1e-4;
    const ParamVector fd = (grad(loss, m.params + v * eps) - grad(loss, m.params - v * eps)) * (0.5 / eps);
    CAPTURE(seed);
    CHECK(rel_err(hvp(loss, m.params, v), fd) <= 1e-4);
  }
}

TEST_CASE("hvp: linear in v and symmetric") {
  const ModelSpec spec = testutil::mlp(3, {5}, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    const Model m = init_model(spec, seed);
    const Batch b = testutil::random_batch(rng, 5, 3, 2);
    const LossFn loss = [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(spec, p, b); };
    const ParamVector v1 = testutil::random_like(m.params, rng);
    const ParamVector v2 = testutil::random_like(m.params, rng);
    const double a = 0.7, c = -1.3;
    const ParamVector lhs = hvp(loss, m.params, v1 * a + v2 * c);
    const ParamVector rhs = hvp(loss, m.params, v1) * a + hvp(loss, m.params, v2) * c;
    CHECK(norm(lhs - rhs) <= 1e-10);
    CHECK(std::fabs(dot(v1, hvp(loss, m.params, v2)) - dot(v2, hvp(loss, m.params, v1))) <= 1e-8);
  }
}

TEST_CASE("cross entropy examples") {
  const int labels3[] = {0, 2};
  CHECK(cross_entropy(Tensor::matrix(2, 3, {0.4, 0.4, 0.4, -1, -1, -1}), labels3) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-14));
  const int label0[] = {0};
  CHECK(cross_entropy(Tensor::matrix(1, 2, {10.0, 0.0}), label0) ==
        doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-12));
  CHECK(cross_entropy(Tensor::matrix(1, 2, {10.0, 0.0}), label0) == doctest::Approx(4.54e-5).epsilon(1e-3));

  const Tensor logits = Tensor::matrix(2, 2, {1.0, -2.0, 0.3, 0.9});
  const int two[] = {1, 0};
  const int first[] = {1};
  const int second[] = {0};
  const double mean = 0.5 * (cross_entropy(Tensor::matrix(1, 2, {1.0, -2.0}), first) +
                             cross_entropy(Tensor::matrix(1, 2, {0.3, 0.9}), second));
  CHECK(cross_entropy(logits, two) == doctest::Approx(mean).epsilon(1e-14));

  const int bad[] = {0, 3};
  CHECK_THROWS_AS(cross_entropy(logits, bad), LabelError);
  const int neg[] = {-1, 0};
  CHECK_THROWS_AS(cross_entropy(logits, neg), LabelError);
}

TEST_CASE("cross entropy is stable for large logits") {
  const int labels[] = {1};
  const double v = cross_entropy(Tensor::matrix(1, 2, {1000.0, 0.0}), labels);
  CHECK(v == doctest::Approx(1000.0));
}

TEST_CASE("mse examples") {
  CHECK(mse(Tensor::vector({1, 2}), Tensor::vector({1, 2})) == 0.0);
  CHECK(mse(Tensor::vector({0, 0}), Tensor::vector({1, 3})) == 5.0);
  CHECK_THROWS_AS(mse(Tensor::vector({0, 0}), Tensor::vector({1, 3, 4})), StructureError);

  const Tensor target = Tensor::vector({1.0, -2.0, 0.5});
  const ParamVector pred({Segment{"p", Tensor::vector({0.2, 0.3, 0.4})}});
  const LossFn loss = [&](ad::Tape&, std::span<const ad::Var> p) { return mse(p[0], target); };
  const auto g = grad(loss, pred).flatten();
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g[i] == doctest::Approx(2.0 * (pred[0][i] - target[i]) / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(5);
  Tensor logits = Tensor::zeros({20, 7});
  for (double& v : logits.data()) v = 30.0 * rng.normal();
  const Tensor p = softmax_rows(logits);
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += p.at(r, c);
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("tape replay and repeated passes are bit-identical") {
  const ModelSpec spec = testutil::mlp(4, {8}, 3);
  Rng rng(3);
  const Model m = init_model(spec, 11);
  const Batch b = testutil::random_batch(rng, 6, 4, 3);

  ad::Tape tape;
  const auto vars = attach(tape, m.params);
  const ad::Var loss = task_loss(spec, vars, b);
  const auto g = tape.gradient(loss, vars, true);
  const Tensor before = loss.value();
  const Tensor grad_before = g[0].value();
  tape.replay();
  CHECK(loss.value() == before);
  CHECK(g[0].value() == grad_before);

  const LossFn fn = [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(spec, p, b); };
  CHECK(grad(fn, m.params) == grad(fn, m.params));
}

TEST_CASE("rng determinism and distributions") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(derive_seed(1, "x", {2}) == derive_seed(1, "x", {2}));
  CHECK(derive_seed(1, "x", {2}) != derive_seed(1, "x", {3}));
  CHECK(derive_seed(1, "x") != derive_seed(1, "y"));

  Rng r(9);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::fabs(sum / n) < 0.03);
  CHECK(std::fabs(sq / n - 1.0) < 0.05);
  const auto idx = r.sample_without_replacement(10, 10);
  std::vector<std::size_t> sorted(idx);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}
