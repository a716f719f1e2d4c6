#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdet {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Raised when operand extents are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN or infinity where finite values are required.
class FiniteValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of Scalar with an arbitrary number of axes.
///
/// Rank-0 tensors (empty shape) hold one element. The 2-D view returned by
/// matrix() folds every leading axis into rows and keeps the last axis as
/// columns, which is how linear maps act on the trailing feature axis.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using ArrayMap = Eigen::Map<Array>;
  using ConstArrayMap = Eigen::Map<const Array>;

  Tensor() : values_(Array::Zero(1)) {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(Array::Zero(shape_size(shape_))) {}

  Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) {
      throw DimensionError("tensor: " + std::to_string(values_.size()) + " values for shape " +
                           shape_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), Eigen::Map<const Array>(values.begin(), static_cast<Index>(values.size()))) {}

  /// Storage left unset; for outputs that are written in full.
  static Tensor uninitialized(Shape shape) {
    const Index n = shape_size(shape);
    return Tensor(std::move(shape), Array(n));
  }

  static Tensor scalar(Scalar value) { return Tensor(Shape{}, Array::Constant(1, value)); }
  static Tensor constant(Shape shape, Scalar value) {
    const Index n = shape_size(shape);
    return Tensor(std::move(shape), Array::Constant(n, value));
  }
  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    RowMatrix rm = m;
    return Tensor(Shape{rm.rows(), rm.cols()}, Eigen::Map<const Array>(rm.data(), rm.size()));
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return values_.size(); }
  Index extent(Index axis) const {
    if (axis < 0) axis += rank();
    return shape_.at(static_cast<std::size_t>(axis));
  }
  Index last_extent() const { return shape_.empty() ? 1 : shape_.back(); }

  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }
  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }
  Scalar item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    return values_[0];
  }

  Array& array() { return values_; }
  const Array& array() const { return values_; }

  MatrixMap matrix() { return MatrixMap(data(), size() / last_extent(), last_extent()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data(), size() / last_extent(), last_extent()); }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw DimensionError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
    }
    return Tensor(std::move(shape), values_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  bool all_finite() const { return values_.isFinite().all(); }

 private:
  Shape shape_;
  Array values_;
};

}  // namespace mdet
