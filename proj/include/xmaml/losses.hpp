#pragma once

#include <span>

#include "xmaml/autodiff.hpp"
#include "xmaml/tensor.hpp"

namespace xmaml {

/// Mean over rows of -log softmax(logits)[i, label_i]. The row log-sum-exp
/// is max-shifted. Throws LabelError for labels outside [0, classes).
ad::Var cross_entropy(ad::Var logits, std::span<const int> labels);
double cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean of squared differences. Throws StructureError on shape mismatch.
ad::Var mse(ad::Var pred, const Tensor& target);
double mse(const Tensor& pred, const Tensor& target);

/// Row-wise softmax of a [n, c] matrix (max-shifted).
Tensor softmax_rows(const Tensor& logits);

}  // namespace xmaml
