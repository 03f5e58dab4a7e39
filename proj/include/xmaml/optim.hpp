#pragma once

#include <cstddef>
#include <vector>

#include "xmaml/params.hpp"

namespace xmaml {

struct AdamParams {
  double b1 = 0.9;
  double b2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a flattened parameter vector.
class Adam {
 public:
  Adam(double lr, AdamParams params = {}) : lr_(lr), p_(params) {}

  ParamVector step(const ParamVector& theta, const ParamVector& grad);
  std::size_t steps() const { return t_; }

 private:
  double lr_;
  AdamParams p_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace xmaml
