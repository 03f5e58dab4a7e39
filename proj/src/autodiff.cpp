#include "xmaml/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "xmaml/errors.hpp"

namespace xmaml::ad {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw StructureError(std::string(op) + ": shape " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw StructureError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_string(x.shape()));
  }
}

// Forward kernels. Shared by recording and replay so both produce the same
// bits. `shape` is only consulted by Fill.
Tensor compute(Op op, const Tensor* a, const Tensor* b, double p0, double p1,
               std::size_t extent, const Shape& shape) {
  switch (op) {
    case Op::Leaf:
      break;
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      require_same_shape(*a, *b, "elementwise");
      std::vector<double> out(a->size());
      const auto x = a->data();
      const auto y = b->data();
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = op == Op::Add ? x[i] + y[i] : op == Op::Sub ? x[i] - y[i] : x[i] * y[i];
      }
      return Tensor(a->shape(), std::move(out));
    }
    case Op::Affine: {
      std::vector<double> out(a->size());
      const auto x = a->data();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = p0 * x[i] + p1;
      return Tensor(a->shape(), std::move(out));
    }
    case Op::Exp:
    case Op::Tanh: {
      std::vector<double> out(a->size());
      const auto x = a->data();
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = op == Op::Exp ? std::exp(x[i]) : std::tanh(x[i]);
      }
      return Tensor(a->shape(), std::move(out));
    }
    case Op::MatMul: {
      require_rank(*a, 2, "matmul");
      require_rank(*b, 2, "matmul");
      const std::size_t n = a->rows(), k = a->cols(), m = b->cols();
      if (b->rows() != k) {
        throw StructureError("matmul: inner dimensions " + shape_string(a->shape()) +
                             " x " + shape_string(b->shape()));
      }
      std::vector<double> out(n * m, 0.0);
      const auto x = a->data();
      const auto y = b->data();
      for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = x[i * k + p];
          const double* yrow = y.data() + p * m;
          for (std::size_t j = 0; j < m; ++j) row[j] += s * yrow[j];
        }
      }
      return Tensor({n, m}, std::move(out));
    }
    case Op::Transpose: {
      require_rank(*a, 2, "transpose");
      const std::size_t n = a->rows(), m = a->cols();
      std::vector<double> out(n * m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a->at(i, j);
      return Tensor({m, n}, std::move(out));
    }
    case Op::BroadcastRows: {
      require_rank(*a, 1, "broadcast_rows");
      const std::size_t m = a->size();
      std::vector<double> out(extent * m);
      for (std::size_t i = 0; i < extent; ++i)
        std::copy(a->data().begin(), a->data().end(), out.begin() + i * m);
      return Tensor({extent, m}, std::move(out));
    }
    case Op::SumRows: {
      require_rank(*a, 2, "sum_rows");
      const std::size_t n = a->rows(), m = a->cols();
      std::vector<double> out(m, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j] += a->at(i, j);
      return Tensor({m}, std::move(out));
    }
    case Op::BroadcastCols: {
      require_rank(*a, 1, "broadcast_cols");
      const std::size_t n = a->size();
      std::vector<double> out(n * extent);
      for (std::size_t i = 0; i < n; ++i)
        std::fill_n(out.begin() + i * extent, extent, (*a)[i]);
      return Tensor({n, extent}, std::move(out));
    }
    case Op::SumCols: {
      require_rank(*a, 2, "sum_cols");
      const std::size_t n = a->rows(), m = a->cols();
      std::vector<double> out(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += a->at(i, j);
      return Tensor({n}, std::move(out));
    }
    case Op::SumAll: {
      double s = 0.0;
      for (double v : a->data()) s += v;
      return Tensor::scalar(s);
    }
    case Op::Fill:
      return Tensor::filled(shape, a->item());
    case Op::LogSumExpRows: {
      require_rank(*a, 2, "logsumexp_rows");
      const std::size_t n = a->rows(), m = a->cols();
      std::vector<double> out(n);
      for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, a->at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += std::exp(a->at(i, j) - mx);
        out[i] = mx + std::log(s);
      }
      return Tensor({n}, std::move(out));
    }
  }
  throw StructureError("compute: leaf has no kernel");
}

}  // namespace

const Tensor& Var::value() const { return tape_->nodes_[index_].value; }

bool Var::requires_grad() const { return tape_->nodes_[index_].requires_grad; }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node n;
  n.requires_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var record(Op op, Var a, Var b, double p0, double p1, std::size_t extent) {
  Tape& tape = a.tape();
  if (b.valid() && &b.tape() != &tape) {
    throw StructureError("operands recorded on different tapes");
  }
  Tape::Node n;
  n.op = op;
  n.a = static_cast<std::int64_t>(a.index());
  n.b = b.valid() ? static_cast<std::int64_t>(b.index()) : -1;
  n.p0 = p0;
  n.p1 = p1;
  n.extent = extent;
  n.requires_grad = a.requires_grad() || (b.valid() && b.requires_grad());
  n.value = compute(op, &a.value(), b.valid() ? &b.value() : nullptr, p0, p1,
                    extent, {});
  return tape.push(std::move(n));
}

Var operator+(Var a, Var b) { return record(Op::Add, a, b, 0, 0, 0); }
Var operator-(Var a, Var b) { return record(Op::Sub, a, b, 0, 0, 0); }
Var operator*(Var a, Var b) { return record(Op::Mul, a, b, 0, 0, 0); }
Var affine(Var x, double scale, double shift) {
  return record(Op::Affine, x, Var(), scale, shift, 0);
}
Var exp(Var x) { return record(Op::Exp, x, Var(), 0, 0, 0); }
Var tanh(Var x) { return record(Op::Tanh, x, Var(), 0, 0, 0); }

Var relu(Var x) {
  std::vector<double> mask(x.value().size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = x.value()[i] > 0.0 ? 1.0 : 0.0;
  return x * x.tape().constant(Tensor(x.shape(), std::move(mask)));
}

Var matmul(Var a, Var b) { return record(Op::MatMul, a, b, 0, 0, 0); }
Var transpose(Var x) { return record(Op::Transpose, x, Var(), 0, 0, 0); }
Var broadcast_rows(Var v, std::size_t rows) {
  return record(Op::BroadcastRows, v, Var(), 0, 0, rows);
}
Var sum_rows(Var x) { return record(Op::SumRows, x, Var(), 0, 0, 0); }
Var broadcast_cols(Var v, std::size_t cols) {
  return record(Op::BroadcastCols, v, Var(), 0, 0, cols);
}
Var sum_cols(Var x) { return record(Op::SumCols, x, Var(), 0, 0, 0); }
Var sum_all(Var x) { return record(Op::SumAll, x, Var(), 0, 0, 0); }
Var logsumexp_rows(Var x) { return record(Op::LogSumExpRows, x, Var(), 0, 0, 0); }

Var fill(Var scalar, const Shape& shape) {
  if (scalar.value().size() != 1) {
    throw StructureError("fill: source must hold one value, got " +
                         shape_string(scalar.shape()));
  }
  Tape& tape = scalar.tape();
  Tape::Node n;
  n.op = Op::Fill;
  n.a = static_cast<std::int64_t>(scalar.index());
  n.requires_grad = scalar.requires_grad();
  n.value = compute(Op::Fill, &scalar.value(), nullptr, 0, 0, 0, shape);
  return tape.push(std::move(n));
}

Var add_bias(Var x, Var b) {
  if (x.value().rank() != 2) {
    throw StructureError("add_bias: expected matrix, got " + shape_string(x.shape()));
  }
  return x + broadcast_rows(b, x.shape()[0]);
}

Var dot(Var a, Var b) { return sum_all(a * b); }

std::vector<Var> Tape::gradient(Var output, std::span<const Var> wrt,
                                bool create_graph) {
  if (&output.tape() != this) throw StructureError("gradient: output on another tape");
  if (output.value().size() != 1) {
    throw StructureError("gradient: output must be a single value, got " +
                         shape_string(output.shape()));
  }
  const std::size_t top = output.index();
  std::vector<std::int64_t> grads(top + 1, -1);
  grads[top] = static_cast<std::int64_t>(
      constant(Tensor::filled(output.shape(), 1.0)).index());

  auto accumulate = [&](std::int64_t target, Var contribution) {
    auto& slot = grads[static_cast<std::size_t>(target)];
    if (slot < 0) {
      slot = static_cast<std::int64_t>(contribution.index());
    } else {
      slot = static_cast<std::int64_t>((at(static_cast<std::size_t>(slot)) + contribution).index());
    }
  };

  for (std::size_t i = top + 1; i-- > 0;) {
    if (grads[i] < 0) continue;
    // Copy what we need: new nodes are appended while we work.
    const Op op = nodes_[i].op;
    if (op == Op::Leaf || !nodes_[i].requires_grad) continue;
    const std::int64_t ia = nodes_[i].a;
    const std::int64_t ib = nodes_[i].b;
    const double p0 = nodes_[i].p0;

    const Var g = at(static_cast<std::size_t>(grads[i]));
    const Var y = at(i);
    const Var a = at(static_cast<std::size_t>(ia));
    const bool need_a = nodes_[static_cast<std::size_t>(ia)].requires_grad;
    const bool need_b = ib >= 0 && nodes_[static_cast<std::size_t>(ib)].requires_grad;
    const Var b = ib >= 0 ? at(static_cast<std::size_t>(ib)) : Var();

    switch (op) {
      case Op::Leaf:
        break;
      case Op::Add:
        if (need_a) accumulate(ia, g);
        if (need_b) accumulate(ib, g);
        break;
      case Op::Sub:
        if (need_a) accumulate(ia, g);
        if (need_b) accumulate(ib, affine(g, -1.0, 0.0));
        break;
      case Op::Mul:
        if (need_a) accumulate(ia, g * b);
        if (need_b) accumulate(ib, g * a);
        break;
      case Op::Affine:
        if (need_a) accumulate(ia, affine(g, p0, 0.0));
        break;
      case Op::Exp:
        if (need_a) accumulate(ia, g * y);
        break;
      case Op::Tanh:
        if (need_a) accumulate(ia, g * affine(y * y, -1.0, 1.0));
        break;
      case Op::MatMul:
        if (need_a) accumulate(ia, matmul(g, transpose(b)));
        if (need_b) accumulate(ib, matmul(transpose(a), g));
        break;
      case Op::Transpose:
        if (need_a) accumulate(ia, transpose(g));
        break;
      case Op::BroadcastRows:
        if (need_a) accumulate(ia, sum_rows(g));
        break;
      case Op::SumRows:
        if (need_a) accumulate(ia, broadcast_rows(g, a.shape()[0]));
        break;
      case Op::BroadcastCols:
        if (need_a) accumulate(ia, sum_cols(g));
        break;
      case Op::SumCols:
        if (need_a) accumulate(ia, broadcast_cols(g, a.shape()[1]));
        break;
      case Op::SumAll:
        if (need_a) accumulate(ia, fill(g, a.shape()));
        break;
      case Op::Fill:
        if (need_a) accumulate(ia, sum_all(g));
        break;
      case Op::LogSumExpRows:
        if (need_a) {
          const std::size_t m = a.shape()[1];
          const Var softmax = exp(a - broadcast_cols(y, m));
          accumulate(ia, broadcast_cols(g, m) * softmax);
        }
        break;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (&w.tape() != this) throw StructureError("gradient: wrt variable on another tape");
    const std::int64_t gi = w.index() <= top ? grads[w.index()] : -1;
    if (gi < 0) {
      out.push_back(constant(Tensor::zeros(w.shape())));
    } else if (create_graph) {
      out.push_back(at(static_cast<std::size_t>(gi)));
    } else {
      out.push_back(constant(nodes_[static_cast<std::size_t>(gi)].value));
    }
  }
  return out;
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf) {
      values.push_back(n.value);
      continue;
    }
    const Tensor* a = &values[static_cast<std::size_t>(n.a)];
    const Tensor* b = n.b >= 0 ? &values[static_cast<std::size_t>(n.b)] : nullptr;
    values.push_back(compute(n.op, a, b, n.p0, n.p1, n.extent, n.value.shape()));
  }
  return values;
}

}  // namespace xmaml::ad
