#pragma once

#include <functional>
#include <span>
#include <vector>

#include "xmaml/autodiff.hpp"
#include "xmaml/params.hpp"

namespace xmaml {

/// A differentiable scalar function of a parameter vector. It receives the
/// tape to record on and one Var per parameter segment (in segment order).
using LossFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

/// Records every segment of `params` as a leaf. Leaves are differentiable
/// variables unless `as_constants`.
std::vector<ad::Var> attach(ad::Tape& tape, const ParamVector& params,
                            bool as_constants = false);

/// Collects the values of `vars` into a ParamVector shaped like `layout`.
ParamVector collect(const ParamVector& layout, std::span<const ad::Var> vars);

/// Gradient of `loss` at `theta`. Throws NonFiniteError naming the first
/// offending segment when the loss or gradient is not finite.
ParamVector grad(const LossFn& loss, const ParamVector& theta);

/// Same as grad() and also returns the loss value.
ParamVector grad(const LossFn& loss, const ParamVector& theta, double& loss_value);

/// Hessian-vector product H(theta) v, computed by differentiating
/// <grad loss(theta), v> a second time.
ParamVector hvp(const LossFn& loss, const ParamVector& theta, const ParamVector& v);

/// Central finite-difference gradient. Test and selftest oracle; O(dim)
/// loss evaluations.
ParamVector finite_difference_grad(const std::function<double(const ParamVector&)>& f,
                                   const ParamVector& theta, double step);

/// Evaluates `loss` at `theta` without taking gradients.
double evaluate(const LossFn& loss, const ParamVector& theta);

}  // namespace xmaml
