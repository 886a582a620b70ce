#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stackvs/errors.hpp"
#include "stackvs/tensor.hpp"

namespace stackvs {

enum class OpKind : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Mul,
  Tanh,
  Sigmoid,
  Softmax,
  Concat,
  RowSelect,
  Scale,
  Sum,
  Log,
  NllGather,
  Slice,
  Reshape,
  Transpose,
};

inline constexpr std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf:
      return "leaf";
    case OpKind::MatMul:
      return "matmul";
    case OpKind::Add:
      return "add";
    case OpKind::Mul:
      return "mul";
    case OpKind::Tanh:
      return "tanh";
    case OpKind::Sigmoid:
      return "sigmoid";
    case OpKind::Softmax:
      return "softmax";
    case OpKind::Concat:
      return "concat";
    case OpKind::RowSelect:
      return "row_select";
    case OpKind::Scale:
      return "scale";
    case OpKind::Sum:
      return "sum";
    case OpKind::Log:
      return "log";
    case OpKind::NllGather:
      return "nll_gather";
    case OpKind::Slice:
      return "slice";
    case OpKind::Reshape:
      return "reshape";
    case OpKind::Transpose:
      return "transpose";
  }
  return "?";
}

inline std::optional<OpKind> op_from_name(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(OpKind::Transpose); ++k) {
    auto op = static_cast<OpKind>(k);
    if (op_name(op) == name) return op;
  }
  return std::nullopt;
}

// Lower bound applied before every log in losses.
inline constexpr double kLogClamp = 1e-300;

namespace testing {
// Multiplies the backward pass of one op kind by a factor. Used to prove that
// gradient checks detect a broken derivative; never set in production paths.
struct GradientCorruption {
  OpKind op;
  double factor;
};
inline std::optional<GradientCorruption> gradient_corruption;
}  // namespace testing

using NodeId = std::uint32_t;

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Define-by-run record of a differentiable computation.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted. backward() walks it in reverse and accumulates
/// gradients by summation in that fixed order.
template <typename Scalar>
class Tape {
 public:
  using Matrix = MatrixX<Scalar>;

  struct Node {
    OpKind op = OpKind::Leaf;
    std::array<NodeId, 2> inputs{};
    std::uint8_t arity = 0;
    Tensor<Scalar> value;
    Scalar constant = 0;            // Scale factor
    std::size_t offset = 0;         // Slice start, NllGather target
    std::vector<std::size_t> rows;  // RowSelect indices
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> leaf(Tensor<Scalar> value) {
    if (value.empty()) throw ShapeError("leaf: empty tensor");
    if (!value.all_finite()) throw NumericError("leaf: non-finite input value");
    Node n;
    n.op = OpKind::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Tensor<Scalar>& value(NodeId id) const { return nodes_.at(id).value; }

  /// Appends a computed node. Used by the op functions below.
  Var<Scalar> record(Node n) {
    if (!n.value.all_finite()) {
      throw NumericError(std::string(op_name(n.op)) + ": produced non-finite value");
    }
    for (std::uint8_t i = 0; i < n.arity; ++i) {
      if (n.inputs[i] >= nodes_.size()) throw ShapeError("record: input node is not on this tape");
    }
    return push(std::move(n));
  }

  /// Reverse-mode sweep from a scalar loss node.
  void backward(const Var<Scalar>& loss) {
    if (&loss.tape() != this) throw ShapeError("backward: loss belongs to another tape");
    if (loss.value().size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
    }
    grads_.assign(nodes_.size(), Matrix());
    grads_[loss.id()] = Matrix::Ones(1, 1);
    for (NodeId id = loss.id() + 1; id-- > 0;) {
      if (grads_[id].size() == 0) continue;
      propagate(id);
    }
  }

  /// Gradient of the last backward() loss w.r.t. a node; zero if unreachable.
  Tensor<Scalar> grad(const Var<Scalar>& v) const {
    const auto& val = value(v.id());
    if (v.id() < grads_.size() && grads_[v.id()].size() != 0) {
      return Tensor<Scalar>(val.shape(), grads_[v.id()]);
    }
    return Tensor<Scalar>::zeros(val.shape());
  }

 private:
  Var<Scalar> push(Node n) {
    if (nodes_.size() >= std::numeric_limits<NodeId>::max()) throw std::length_error("tape is full");
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, static_cast<NodeId>(nodes_.size() - 1));
  }

  Matrix& acc(NodeId id) {
    auto& g = grads_[id];
    if (g.size() == 0) {
      const auto& v = nodes_[id].value.values();
      g = Matrix::Zero(v.rows(), v.cols());
    }
    return g;
  }

  void propagate(NodeId id) {
    const Node& n = nodes_[id];
    Matrix g = grads_[id];
    if (testing::gradient_corruption && testing::gradient_corruption->op == n.op) {
      g *= static_cast<Scalar>(testing::gradient_corruption->factor);
    }
    const Matrix& y = n.value.values();
    auto in = [&](int i) -> const Tensor<Scalar>& { return nodes_[n.inputs[i]].value; };

    switch (n.op) {
      case OpKind::Leaf:
        break;
      case OpKind::MatMul: {
        const auto& a = in(0);
        const auto& b = in(1);
        if (a.rank() == 2 && b.rank() == 2) {
          acc(n.inputs[0]).noalias() += g * b.values().transpose();
          acc(n.inputs[1]).noalias() += a.values().transpose() * g;
        } else if (a.rank() == 2) {
          acc(n.inputs[0]).noalias() += g * b.values().transpose();
          acc(n.inputs[1]).noalias() += a.values().transpose() * g;
        } else {
          // y = B^T x stored as a column
          acc(n.inputs[0]).noalias() += b.values() * g;
          acc(n.inputs[1]).noalias() += a.values() * g.transpose();
        }
        break;
      }
      case OpKind::Add: {
        acc(n.inputs[0]) += g;
        const auto& b = in(1);
        if (b.rank() == in(0).rank()) {
          acc(n.inputs[1]) += g;
        } else {
          acc(n.inputs[1]) += g.colwise().sum().transpose();
        }
        break;
      }
      case OpKind::Mul:
        acc(n.inputs[0]) += g.cwiseProduct(in(1).values());
        acc(n.inputs[1]) += g.cwiseProduct(in(0).values());
        break;
      case OpKind::Tanh:
        acc(n.inputs[0]) += g.cwiseProduct((Scalar(1) - y.array().square()).matrix());
        break;
      case OpKind::Sigmoid:
        acc(n.inputs[0]) += g.cwiseProduct((y.array() * (Scalar(1) - y.array())).matrix());
        break;
      case OpKind::Softmax: {
        auto& ga = acc(n.inputs[0]);
        if (n.value.rank() == 1) {
          const Scalar dot = g.cwiseProduct(y).sum();
          ga.array() += y.array() * (g.array() - dot);
        } else {
          for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const Scalar dot = g.row(r).dot(y.row(r));
            ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
          }
        }
        break;
      }
      case OpKind::Concat: {
        const auto& a = in(0);
        if (n.value.rank() == 1) {
          const auto na = static_cast<Eigen::Index>(a.size());
          acc(n.inputs[0]) += g.topRows(na);
          acc(n.inputs[1]) += g.bottomRows(g.rows() - na);
        } else {
          const auto na = static_cast<Eigen::Index>(a.last_dim());
          acc(n.inputs[0]) += g.leftCols(na);
          acc(n.inputs[1]) += g.rightCols(g.cols() - na);
        }
        break;
      }
      case OpKind::RowSelect: {
        auto& gt = acc(n.inputs[0]);
        for (std::size_t r = 0; r < n.rows.size(); ++r) {
          gt.row(static_cast<Eigen::Index>(n.rows[r])) += g.row(static_cast<Eigen::Index>(r));
        }
        break;
      }
      case OpKind::Scale:
        acc(n.inputs[0]) += n.constant * g;
        break;
      case OpKind::Sum:
        acc(n.inputs[0]).array() += g(0, 0);
        break;
      case OpKind::Log: {
        const auto& x = in(0).values();
        auto& ga = acc(n.inputs[0]);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          if (x.data()[i] > Scalar(kLogClamp)) ga.data()[i] += g.data()[i] / x.data()[i];
        }
        break;
      }
      case OpKind::NllGather: {
        const Scalar p = in(0)[n.offset];
        if (p > Scalar(kLogClamp)) acc(n.inputs[0]).data()[n.offset] -= g(0, 0) / p;
        break;
      }
      case OpKind::Slice: {
        const auto len = static_cast<Eigen::Index>(n.value.size());
        acc(n.inputs[0]).middleRows(static_cast<Eigen::Index>(n.offset), len) += g;
        break;
      }
      case OpKind::Reshape: {
        auto& ga = acc(n.inputs[0]);
        Eigen::Map<const Matrix> gm(g.data(), ga.rows(), ga.cols());
        ga += gm;
        break;
      }
      case OpKind::Transpose:
        acc(n.inputs[0]) += g.transpose();
        break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

// ---------------------------------------------------------------------------
// Recorded operations. Every function checks shapes and appends one node.

namespace detail {

template <typename Scalar>
void same_tape(const Var<Scalar>& a, const Var<Scalar>& b, std::string_view op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ShapeError(std::string(op) + ": operands must live on the same tape");
  }
}

template <typename Scalar>
typename Tape<Scalar>::Node unary(OpKind op, const Var<Scalar>& x) {
  if (!x.valid()) throw ShapeError(std::string(op_name(op)) + ": invalid operand");
  typename Tape<Scalar>::Node n;
  n.op = op;
  n.inputs[0] = x.id();
  n.arity = 1;
  return n;
}

template <typename Scalar>
typename Tape<Scalar>::Node binary(OpKind op, const Var<Scalar>& a, const Var<Scalar>& b) {
  same_tape(a, b, op_name(op));
  typename Tape<Scalar>::Node n;
  n.op = op;
  n.inputs = {a.id(), b.id()};
  n.arity = 2;
  return n;
}

inline std::string mismatch(std::string_view op, const Shape& a, const Shape& b) {
  return std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b);
}

}  // namespace detail

/// Matrix product with rank-1 operands treated as column (right) or row (left) vectors.
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto n = detail::binary(OpKind::MatMul, a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() == 2 && bv.rank() == 2) {
    if (av.dim(1) != bv.dim(0)) throw ShapeError(detail::mismatch("matmul", av.shape(), bv.shape()));
    n.value = Tensor<Scalar>(Shape{av.dim(0), bv.dim(1)}, av.values() * bv.values());
  } else if (av.rank() == 2 && bv.rank() == 1) {
    if (av.dim(1) != bv.dim(0)) throw ShapeError(detail::mismatch("matmul", av.shape(), bv.shape()));
    n.value = Tensor<Scalar>(Shape{av.dim(0)}, av.values() * bv.values());
  } else if (av.rank() == 1 && bv.rank() == 2) {
    if (av.dim(0) != bv.dim(0)) throw ShapeError(detail::mismatch("matmul", av.shape(), bv.shape()));
    n.value = Tensor<Scalar>(Shape{bv.dim(1)}, bv.values().transpose() * av.values());
  } else {
    throw ShapeError(detail::mismatch("matmul", av.shape(), bv.shape()));
  }
  return a.tape().record(std::move(n));
}

/// Elementwise sum. A rank-1 right operand is broadcast over the rows of a rank-2 left operand.
template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto n = detail::binary(OpKind::Add, a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() == bv.shape()) {
    n.value = Tensor<Scalar>(av.shape(), av.values() + bv.values());
  } else if (av.rank() == 2 && bv.rank() == 1 && av.dim(1) == bv.dim(0)) {
    typename Tape<Scalar>::Matrix m = av.values();
    m.rowwise() += bv.values().col(0).transpose();
    n.value = Tensor<Scalar>(av.shape(), std::move(m));
  } else {
    throw ShapeError(detail::mismatch("add", av.shape(), bv.shape()));
  }
  return a.tape().record(std::move(n));
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto n = detail::binary(OpKind::Mul, a, b);
  if (a.shape() != b.shape()) throw ShapeError(detail::mismatch("mul", a.shape(), b.shape()));
  n.value = Tensor<Scalar>(a.shape(), a.value().values().cwiseProduct(b.value().values()));
  return a.tape().record(std::move(n));
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  auto n = detail::unary(OpKind::Tanh, x);
  n.value = Tensor<Scalar>(x.shape(), x.value().values().array().tanh().matrix());
  return x.tape().record(std::move(n));
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  auto n = detail::unary(OpKind::Sigmoid, x);
  typename Tape<Scalar>::Matrix m = x.value().values().unaryExpr([](Scalar v) {
    // Split on sign so exp never overflows.
    if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
  n.value = Tensor<Scalar>(x.shape(), std::move(m));
  return x.tape().record(std::move(n));
}

/// Plain softmax of a column of logits with max-subtraction.
template <typename Derived>
auto softmax_values(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw ShapeError("softmax: empty input");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>(e / e.sum());
}

/// Softmax along the last axis.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x) {
  auto n = detail::unary(OpKind::Softmax, x);
  const auto& xv = x.value();
  typename Tape<Scalar>::Matrix m(xv.values().rows(), xv.values().cols());
  if (xv.rank() == 1) {
    m.col(0) = softmax_values(xv.values().col(0));
  } else {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m.row(r) = softmax_values(xv.values().row(r).transpose()).transpose();
    }
  }
  n.value = Tensor<Scalar>(xv.shape(), std::move(m));
  return x.tape().record(std::move(n));
}

/// Concatenation along the last axis.
template <typename Scalar>
Var<Scalar> concat(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto n = detail::binary(OpKind::Concat, a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() == 1 && bv.rank() == 1) {
    typename Tape<Scalar>::Matrix m(av.values().rows() + bv.values().rows(), 1);
    m << av.values(), bv.values();
    n.value = Tensor<Scalar>(Shape{av.size() + bv.size()}, std::move(m));
  } else if (av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0)) {
    typename Tape<Scalar>::Matrix m(av.values().rows(), av.values().cols() + bv.values().cols());
    m << av.values(), bv.values();
    n.value = Tensor<Scalar>(Shape{av.dim(0), av.dim(1) + bv.dim(1)}, std::move(m));
  } else {
    throw ShapeError(detail::mismatch("concat", av.shape(), bv.shape()));
  }
  return a.tape().record(std::move(n));
}

/// Gathers rows of a rank-2 table (embedding lookup). Result is [indices x cols].
template <typename Scalar>
Var<Scalar> row_select(const Var<Scalar>& table, std::span<const std::size_t> indices) {
  auto n = detail::unary(OpKind::RowSelect, table);
  const auto& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("row_select: table must be rank 2, got " + shape_string(tv.shape()));
  if (indices.empty()) throw ShapeError("row_select: no indices");
  typename Tape<Scalar>::Matrix m(static_cast<Eigen::Index>(indices.size()), tv.values().cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= tv.dim(0)) {
      throw ShapeError("row_select: index " + std::to_string(indices[r]) + " out of range for " +
                       shape_string(tv.shape()));
    }
    m.row(static_cast<Eigen::Index>(r)) = tv.values().row(static_cast<Eigen::Index>(indices[r]));
  }
  n.rows.assign(indices.begin(), indices.end());
  n.value = Tensor<Scalar>(Shape{indices.size(), tv.dim(1)}, std::move(m));
  return table.tape().record(std::move(n));
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar c) {
  auto n = detail::unary(OpKind::Scale, x);
  n.constant = c;
  n.value = Tensor<Scalar>(x.shape(), c * x.value().values());
  return x.tape().record(std::move(n));
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  auto n = detail::unary(OpKind::Sum, x);
  n.value = Tensor<Scalar>::scalar(x.value().values().sum());
  return x.tape().record(std::move(n));
}

/// Elementwise log of max(x, kLogClamp).
template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& x) {
  auto n = detail::unary(OpKind::Log, x);
  typename Tape<Scalar>::Matrix m =
      x.value().values().unaryExpr([](Scalar v) { return std::log(std::max(v, Scalar(kLogClamp))); });
  n.value = Tensor<Scalar>(x.shape(), std::move(m));
  return x.tape().record(std::move(n));
}

/// -log(max(p[target], kLogClamp)) for a rank-1 distribution p.
template <typename Scalar>
Var<Scalar> nll_gather(const Var<Scalar>& probs, std::size_t target) {
  auto n = detail::unary(OpKind::NllGather, probs);
  const auto& pv = probs.value();
  if (pv.rank() != 1) throw ShapeError("nll_gather: expects rank-1 distribution, got " + shape_string(pv.shape()));
  if (target >= pv.size()) {
    throw ShapeError("nll_gather: target " + std::to_string(target) + " out of range for " + shape_string(pv.shape()));
  }
  n.offset = target;
  n.value = Tensor<Scalar>::scalar(-std::log(std::max(pv[target], Scalar(kLogClamp))));
  return probs.tape().record(std::move(n));
}

/// Contiguous segment [offset, offset + length) of a rank-1 tensor.
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, std::size_t offset, std::size_t length) {
  auto n = detail::unary(OpKind::Slice, x);
  const auto& xv = x.value();
  if (xv.rank() != 1 || length == 0 || offset + length > xv.size()) {
    throw ShapeError("slice: [" + std::to_string(offset) + ", +" + std::to_string(length) + ") invalid for " +
                     shape_string(xv.shape()));
  }
  n.offset = offset;
  n.value = Tensor<Scalar>(
      Shape{length}, xv.values().middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(length)));
  return x.tape().record(std::move(n));
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  auto n = detail::unary(OpKind::Reshape, x);
  n.value = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(n));
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& x) {
  auto n = detail::unary(OpKind::Transpose, x);
  const auto& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("transpose: expects rank 2, got " + shape_string(xv.shape()));
  n.value = Tensor<Scalar>(Shape{xv.dim(1), xv.dim(0)}, xv.values().transpose());
  return x.tape().record(std::move(n));
}

}  // namespace stackvs
