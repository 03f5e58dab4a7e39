#include "xmaml/calculus.hpp"

#include <cmath>

#include "xmaml/errors.hpp"

namespace xmaml {

std::vector<ad::Var> attach(ad::Tape& tape, const ParamVector& params,
                            bool as_constants) {
  std::vector<ad::Var> vars;
  vars.reserve(params.segment_count());
  for (const Segment& s : params.segments()) {
    vars.push_back(as_constants ? tape.constant(s.value) : tape.variable(s.value));
  }
  return vars;
}

ParamVector collect(const ParamVector& layout, std::span<const ad::Var> vars) {
  if (vars.size() != layout.segment_count()) {
    throw StructureError("collect: " + std::to_string(vars.size()) +
                         " variables for " + std::to_string(layout.segment_count()) +
                         " segments");
  }
  std::vector<Segment> out;
  out.reserve(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].shape() != layout[i].shape()) {
      throw StructureError("collect: segment '" + layout.segments()[i].name +
                           "' has shape " + shape_string(vars[i].shape()));
    }
    out.push_back({layout.segments()[i].name, vars[i].value()});
  }
  return ParamVector(std::move(out));
}

ParamVector grad(const LossFn& loss, const ParamVector& theta, double& loss_value) {
  ad::Tape tape;
  const auto vars = attach(tape, theta);
  const ad::Var out = loss(tape, vars);
  loss_value = out.value().item();
  const auto g = tape.gradient(out, vars);
  ParamVector result = collect(theta, g);
  if (!std::isfinite(loss_value)) {
    std::string bad = theta.first_non_finite();
    if (bad.empty()) bad = result.first_non_finite();
    throw NonFiniteError("loss is not finite (" + std::to_string(loss_value) + ")" +
                         (bad.empty() ? std::string() : "; first offending segment '" + bad + "'"));
  }
  if (auto bad = result.first_non_finite(); !bad.empty()) {
    throw NonFiniteError("gradient of segment '" + bad + "' is not finite");
  }
  return result;
}

ParamVector grad(const LossFn& loss, const ParamVector& theta) {
  double ignored = 0.0;
  return grad(loss, theta, ignored);
}

ParamVector hvp(const LossFn& loss, const ParamVector& theta, const ParamVector& v) {
  if (!theta.same_structure(v)) {
    throw StructureError("hvp: direction differs in structure from theta");
  }
  ad::Tape tape;
  const auto vars = attach(tape, theta);
  const ad::Var out = loss(tape, vars);
  const auto g = tape.gradient(out, vars, /*create_graph=*/true);
  ad::Var inner = ad::dot(g[0], tape.constant(v[0]));
  for (std::size_t i = 1; i < g.size(); ++i) {
    inner = inner + ad::dot(g[i], tape.constant(v[i]));
  }
  ParamVector result = collect(theta, tape.gradient(inner, vars));
  if (auto bad = result.first_non_finite(); !bad.empty()) {
    throw NonFiniteError("Hessian-vector product of segment '" + bad + "' is not finite");
  }
  return result;
}

ParamVector finite_difference_grad(const std::function<double(const ParamVector&)>& f,
                                   const ParamVector& theta, double step) {
  std::vector<double> flat = theta.flatten();
  std::vector<double> out(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + step;
    const double up = f(theta.unflatten(flat));
    flat[i] = keep - step;
    const double down = f(theta.unflatten(flat));
    flat[i] = keep;
    out[i] = (up - down) / (2.0 * step);
  }
  return theta.unflatten(out);
}

double evaluate(const LossFn& loss, const ParamVector& theta) {
  ad::Tape tape;
  const auto vars = attach(tape, theta, /*as_constants=*/true);
  return loss(tape, vars).value().item();
}

}  // namespace xmaml
