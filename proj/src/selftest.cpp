#include "xmaml/selftest.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "xmaml/calculus.hpp"
#include "xmaml/meta.hpp"
#include "xmaml/model.hpp"
#include "xmaml/rng.hpp"
#include "xmaml/stats.hpp"

namespace xmaml {
namespace {

double rel_err(const ParamVector& a, const ParamVector& b) {
  const double scale = std::max(norm(b), 1e-12);
  return norm(a - b) / scale;
}

std::string fmt(const char* label, double v) {
  std::ostringstream out;
  out << label << '=' << v;
  return out.str();
}

Batch random_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t classes) {
  Batch b;
  b.inputs = Tensor::zeros({n, d});
  for (double& v : b.inputs.data()) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) b.targets.push_back(static_cast<double>(rng.below(classes)));
  return b;
}

ParamVector random_like(const ParamVector& p, Rng& rng) {
  std::vector<double> flat(p.total_dim());
  for (double& v : flat) v = rng.normal();
  return p.unflatten(flat);
}

}  // namespace

std::vector<SelftestCheck> run_selftest(std::ostream* out) {
  std::vector<SelftestCheck> checks;
  auto add = [&](std::string name, bool ok, std::string detail) {
    if (out) *out << (ok ? "PASS " : "FAIL ") << name << " (" << detail << ")\n";
    checks.push_back({std::move(name), ok, std::move(detail)});
  };

  ModelSpec spec;
  spec.input_dim = 4;
  spec.hidden_dims = {8};
  spec.output_dim = 3;
  double worst_grad = 0.0, worst_hvp = 0.0, worst_meta = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(derive_seed(seed, "selftest"));
    const Model m = init_model(spec, seed);
    const Batch support = random_batch(rng, 6, 4, 3);
    const Batch query = random_batch(rng, 6, 4, 3);
    const LossFn ls = [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(spec, p, support); };
    const LossFn lq = [&](ad::Tape&, std::span<const ad::Var> p) { return task_loss(spec, p, query); };

    const auto f = [&](const ParamVector& th) { return evaluate(ls, th); };
    worst_grad = std::max(worst_grad, rel_err(grad(ls, m.params), finite_difference_grad(f, m.params, 1e-5)));

    const ParamVector v = random_like(m.params, rng);
    const double h = 1e-5;
    const ParamVector fd_hvp = (grad(ls, m.params + v * h) - grad(ls, m.params - v * h)) * (0.5 / h);
    worst_hvp = std::max(worst_hvp, rel_err(hvp(ls, m.params, v), fd_hvp));

    const auto composed = [&](const ParamVector& th) { return evaluate(lq, inner_adapt(th, ls, 0.5, 1)); };
    const MetaGradient mg = meta_gradient(ls, lq, m.params, 0.5, 1, Order::full);
    worst_meta = std::max(worst_meta, rel_err(mg.gradient, finite_difference_grad(composed, m.params, 1e-5)));
  }
  add("gradient vs finite differences", worst_grad <= 1e-6, fmt("max_rel_err", worst_grad));
  add("hessian-vector product vs finite differences", worst_hvp <= 1e-5, fmt("max_rel_err", worst_hvp));
  add("full meta-gradient vs finite differences", worst_meta <= 1e-4, fmt("max_rel_err", worst_meta));

  {
    ParamVector theta({Segment{"theta", Tensor::vector({2.0})}});
    const LossFn sup = [](ad::Tape&, std::span<const ad::Var> p) { return ad::sum_all(p[0] * p[0]); };
    const LossFn qry = [](ad::Tape&, std::span<const ad::Var> p) {
      const ad::Var d = ad::affine(p[0], 1.0, -1.0);
      return ad::sum_all(d * d);
    };
    const double full = meta_gradient(sup, qry, theta, 0.1, 1, Order::full).gradient.flatten()[0];
    const double first = meta_gradient(sup, qry, theta, 0.1, 1, Order::first).gradient.flatten()[0];
    add("closed-form quadratic meta-gradient",
        std::fabs(full - 0.96) <= 1e-10 && std::fabs(first - 1.2) <= 1e-10,
        fmt("full", full) + " " + fmt("first", first));
  }

  {
    const double a[] = {1, 2, 3, 4, 5};
    const double b[] = {0, 0, 0, 0, 0};
    const TTestResult t = paired_t_test(a, b);
    add("paired t-test oracle", std::fabs(t.p - 0.0132) <= 5e-4 && t.df == 4,
        fmt("t", t.t) + " " + fmt("p", t.p));
    const double c = bonferroni(0.05, 200);
    add("bonferroni cutoff", c == 0.00025, fmt("cutoff", c));
  }
  return checks;
}

}  // namespace xmaml
