#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "xmaml/tensor.hpp"

namespace xmaml {

struct Segment {
  std::string name;
  Tensor value;
};

/// Ordered, named parameter tensors of a model (weights and biases). All
/// reductions walk segments in order, then row-major within a segment.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<Segment> segments);

  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t segment_count() const { return segments_.size(); }
  std::size_t total_dim() const { return total_dim_; }
  const Tensor& operator[](std::size_t i) const { return segments_[i].value; }
  const Tensor& at(const std::string& name) const;

  std::vector<double> flatten() const;
  /// Same structure as *this, filled from `flat` (size must be total_dim).
  ParamVector unflatten(std::span<const double> flat) const;
  /// Same structure, every value zero.
  ParamVector zeros_like() const;

  /// Names and shapes agree segment by segment.
  bool same_structure(const ParamVector& other) const;
  /// Throws StructureError unless same_structure(other).
  void require_same_structure(const ParamVector& other) const;

  /// Name of the first segment holding a non-finite value, or empty.
  std::string first_non_finite() const;

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator-=(const ParamVector& other);
  ParamVector& operator*=(double s);

  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(ParamVector a, double s) { return a *= s; }
  friend ParamVector operator*(double s, ParamVector a) { return a *= s; }

  /// Bitwise equality of names, shapes and payloads.
  friend bool operator==(const ParamVector& a, const ParamVector& b);

 private:
  std::vector<Segment> segments_;
  std::size_t total_dim_ = 0;
};

double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& a);

}  // namespace xmaml
