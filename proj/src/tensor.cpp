#include "xmaml/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "xmaml/errors.hpp"

namespace xmaml {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw StructureError("tensor shape " + shape_string(shape_) +
                         " does not match " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw StructureError("rows() on rank-" + std::to_string(rank()) + " tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw StructureError("cols() on rank-" + std::to_string(rank()) + " tensor");
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw StructureError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape_ == b.shape_ &&
         (a.data_.empty() ||
          std::memcmp(a.data_.data(), b.data_.data(),
                      a.data_.size() * sizeof(double)) == 0);
}

}  // namespace xmaml
