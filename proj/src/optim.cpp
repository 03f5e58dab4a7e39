#include "xmaml/optim.hpp"

#include <cmath>

namespace xmaml {

ParamVector Adam::step(const ParamVector& theta, const ParamVector& grad) {
  theta.require_same_structure(grad);
  std::vector<double> x = theta.flatten();
  const std::vector<double> g = grad.flatten();
  if (m_.empty()) {
    m_.assign(x.size(), 0.0);
    v_.assign(x.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(p_.b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(p_.b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m_[i] = p_.b1 * m_[i] + (1.0 - p_.b1) * g[i];
    v_[i] = p_.b2 * v_[i] + (1.0 - p_.b2) * g[i] * g[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    x[i] -= lr_ * mhat / (std::sqrt(vhat) + p_.eps);
  }
  return theta.unflatten(x);
}

}  // namespace xmaml
