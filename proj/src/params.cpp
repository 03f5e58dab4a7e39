#include "xmaml/params.hpp"

#include <cmath>
#include <set>

#include "xmaml/errors.hpp"

namespace xmaml {

ParamVector::ParamVector(std::vector<Segment> segments)
    : segments_(std::move(segments)) {
  std::set<std::string> seen;
  for (const Segment& s : segments_) {
    if (!seen.insert(s.name).second) {
      throw StructureError("duplicate parameter segment '" + s.name + "'");
    }
    total_dim_ += s.value.size();
  }
}

const Tensor& ParamVector::at(const std::string& name) const {
  for (const Segment& s : segments_) {
    if (s.name == name) return s.value;
  }
  throw StructureError("no parameter segment named '" + name + "'");
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> out;
  out.reserve(total_dim_);
  for (const Segment& s : segments_) {
    out.insert(out.end(), s.value.data().begin(), s.value.data().end());
  }
  return out;
}

ParamVector ParamVector::unflatten(std::span<const double> flat) const {
  if (flat.size() != total_dim_) {
    throw StructureError("unflatten: expected " + std::to_string(total_dim_) +
                         " values, got " + std::to_string(flat.size()));
  }
  std::vector<Segment> out;
  out.reserve(segments_.size());
  std::size_t offset = 0;
  for (const Segment& s : segments_) {
    const std::size_t n = s.value.size();
    out.push_back({s.name, Tensor(s.value.shape(),
                                  std::vector<double>(flat.begin() + offset,
                                                      flat.begin() + offset + n))});
    offset += n;
  }
  return ParamVector(std::move(out));
}

ParamVector ParamVector::zeros_like() const {
  std::vector<Segment> out;
  out.reserve(segments_.size());
  for (const Segment& s : segments_) out.push_back({s.name, Tensor::zeros(s.value.shape())});
  return ParamVector(std::move(out));
}

bool ParamVector::same_structure(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].name != other.segments_[i].name ||
        segments_[i].value.shape() != other.segments_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

void ParamVector::require_same_structure(const ParamVector& other) const {
  if (!same_structure(other)) {
    throw StructureError("parameter vectors differ in segment names or shapes");
  }
}

std::string ParamVector::first_non_finite() const {
  for (const Segment& s : segments_) {
    if (!s.value.all_finite()) return s.name;
  }
  return {};
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  require_same_structure(other);
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    auto dst = segments_[i].value.data();
    auto src = other.segments_[i].value.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
  require_same_structure(other);
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    auto dst = segments_[i].value.data();
    auto src = other.segments_[i].value.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= src[j];
  }
  return *this;
}

ParamVector& ParamVector::operator*=(double s) {
  for (Segment& seg : segments_) {
    for (double& v : seg.value.data()) v *= s;
  }
  return *this;
}

bool operator==(const ParamVector& a, const ParamVector& b) {
  if (a.segments_.size() != b.segments_.size()) return false;
  for (std::size_t i = 0; i < a.segments_.size(); ++i) {
    if (a.segments_[i].name != b.segments_[i].name ||
        !(a.segments_[i].value == b.segments_[i].value)) {
      return false;
    }
  }
  return true;
}

double dot(const ParamVector& a, const ParamVector& b) {
  a.require_same_structure(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.segment_count(); ++i) {
    const auto x = a[i].data();
    const auto y = b[i].data();
    for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * y[j];
  }
  return s;
}

double norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

}  // namespace xmaml
