#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "stackvs/errors.hpp"

namespace stackvs {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense rank-1 or rank-2 array of Scalar in row-major order.
///
/// A rank-1 tensor of shape [n] is stored as an n x 1 column so that
/// matrix-vector products map onto plain Eigen products. A scalar is the
/// rank-1 shape [1]. A default-constructed tensor is empty (shape []) and
/// only serves as a placeholder.
template <typename Scalar>
class Tensor {
 public:
  using Matrix = MatrixX<Scalar>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    values_ = Matrix::Zero(rows_of(shape_), cols_of(shape_));
  }

  Tensor(Shape shape, Matrix values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape(shape_);
    if (values_.rows() != static_cast<Eigen::Index>(rows_of(shape_)) ||
        values_.cols() != static_cast<Eigen::Index>(cols_of(shape_))) {
      throw ShapeError("tensor storage does not match shape " + shape_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor vector(std::initializer_list<Scalar> values) {
    Tensor t(Shape{values.size()});
    std::size_t i = 0;
    for (Scalar v : values) t.values_(static_cast<Eigen::Index>(i++), 0) = v;
    return t;
  }

  static Tensor vector(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) {
    Tensor t(Shape{static_cast<std::size_t>(v.size())});
    t.values_.col(0) = v;
    return t;
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<Scalar> values) {
    Tensor t(Shape{rows, cols});
    if (values.size() != rows * cols) throw ShapeError("matrix initializer has wrong element count");
    std::copy(values.begin(), values.end(), t.values_.data());
    return t;
  }

  static Tensor matrix(const Matrix& m) {
    return Tensor(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, m);
  }

  static Tensor scalar(Scalar v) { return vector({v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  bool empty() const { return shape_.empty(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t last_dim() const { return shape_.back(); }

  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }

  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](std::size_t i) { return values_.data()[i]; }
  Scalar operator[](std::size_t i) const { return values_.data()[i]; }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return values_(0, 0);
  }

  bool all_finite() const { return values_.allFinite(); }

  /// Same values under a new shape with equal element count.
  Tensor reshaped(Shape shape) const {
    check_shape(shape);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (n != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Matrix m = Eigen::Map<const Matrix>(values_.data(), rows_of(shape), cols_of(shape));
    return Tensor(std::move(shape), std::move(m));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.values_ == b.values_; }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 2) {
      throw ShapeError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
    }
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    }
  }
  static Eigen::Index rows_of(const Shape& s) { return static_cast<Eigen::Index>(s[0]); }
  static Eigen::Index cols_of(const Shape& s) { return s.size() == 1 ? 1 : static_cast<Eigen::Index>(s[1]); }

  Shape shape_;
  Matrix values_;
};

}  // namespace stackvs
