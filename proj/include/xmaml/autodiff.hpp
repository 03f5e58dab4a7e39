#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records primitive operations in evaluation order. Tape::gradient
// walks the record backwards and expresses every vector-Jacobian product
// with the same recorded primitives, so the backward pass is itself part
// of the tape and can be differentiated again (double backprop). This is
// what gives exact Hessian-vector products and second-order meta-gradients.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "xmaml/tensor.hpp"

namespace xmaml::ad {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Affine,         // scale * x + shift
  Exp,
  Tanh,
  MatMul,
  Transpose,
  BroadcastRows,  // [m] -> [n, m]
  SumRows,        // [n, m] -> [m]
  BroadcastCols,  // [n] -> [n, m]
  SumCols,        // [n, m] -> [n]
  SumAll,         // any -> scalar
  Fill,           // scalar -> any shape
  LogSumExpRows,  // [n, m] -> [n], max-shifted
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape is alive.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that gradients are taken with respect to.
  Var variable(Tensor value);
  /// Leaf treated as a constant (never receives a gradient).
  Var constant(Tensor value);

  std::size_t size() const { return nodes_.size(); }

  /// d output / d wrt for a single-element `output`. With create_graph the
  /// returned gradients stay connected to the tape and can be
  /// differentiated again; otherwise they are detached constants.
  std::vector<Var> gradient(Var output, std::span<const Var> wrt,
                            bool create_graph = false);

  /// Recomputes every non-leaf value from the recorded leaves.
  std::vector<Tensor> replay() const;

  /// Recorded value of node `index`.
  const Tensor& value(std::size_t index) const { return nodes_[index].value; }

 private:
  friend class Var;
  friend Var record(Op, Var, Var, double, double, std::size_t);
  friend Var fill(Var, const Shape&);

  struct Node {
    Op op = Op::Leaf;
    std::int64_t a = -1;
    std::int64_t b = -1;
    double p0 = 0.0;
    double p1 = 0.0;
    std::size_t extent = 0;
    bool requires_grad = false;
    Tensor value;
  };

  Var push(Node node);
  Var at(std::size_t index) { return Var(this, index); }

  // deque keeps references to earlier nodes stable while the tape grows.
  std::deque<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product of equal shapes.
Var operator*(Var a, Var b);
Var affine(Var x, double scale, double shift);
Var exp(Var x);
Var tanh(Var x);
/// x * [x > 0]; the mask is a constant so the kink carries no curvature.
Var relu(Var x);
Var matmul(Var a, Var b);
Var transpose(Var x);
Var broadcast_rows(Var v, std::size_t rows);
Var sum_rows(Var x);
Var broadcast_cols(Var v, std::size_t cols);
Var sum_cols(Var x);
Var sum_all(Var x);
Var fill(Var scalar, const Shape& shape);
Var logsumexp_rows(Var x);

/// x[n, m] + b[m] broadcast across rows.
Var add_bias(Var x, Var b);
/// Sum of elementwise products; a scalar.
Var dot(Var a, Var b);

}  // namespace xmaml::ad
