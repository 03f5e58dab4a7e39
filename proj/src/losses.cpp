#include "xmaml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xmaml/errors.hpp"

namespace xmaml {

ad::Var cross_entropy(ad::Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) {
    throw StructureError("cross_entropy: logits must be [n, c], got " + shape_string(z.shape()));
  }
  const std::size_t n = z.rows(), c = z.cols();
  if (n == 0) throw StructureError("cross_entropy: empty batch");
  if (labels.size() != n) {
    throw StructureError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  Tensor onehot = Tensor::zeros({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw LabelError("label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(c) + ")");
    }
    onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  ad::Tape& tape = logits.tape();
  const ad::Var picked = ad::dot(logits, tape.constant(std::move(onehot)));
  const ad::Var total = ad::sum_all(ad::logsumexp_rows(logits)) - picked;
  return ad::affine(total, 1.0 / static_cast<double>(n), 0.0);
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  ad::Tape tape;
  return cross_entropy(tape.constant(logits), labels).value().item();
}

ad::Var mse(ad::Var pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw StructureError("mse: prediction shape " + shape_string(pred.shape()) +
                         " vs target " + shape_string(target.shape()));
  }
  if (target.size() == 0) throw StructureError("mse: empty input");
  const ad::Var diff = pred - pred.tape().constant(target);
  return ad::affine(ad::dot(diff, diff), 1.0 / static_cast<double>(target.size()), 0.0);
}

double mse(const Tensor& pred, const Tensor& target) {
  ad::Tape tape;
  return mse(tape.constant(pred), target).value().item();
}

Tensor softmax_rows(const Tensor& logits) {
  const std::size_t n = logits.rows(), c = logits.cols();
  Tensor out = Tensor::zeros({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out.at(i, j) = std::exp(logits.at(i, j) - mx);
      s += out.at(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= s;
  }
  return out;
}

}  // namespace xmaml
