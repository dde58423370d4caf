#pragma once

#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deepvo/error.hpp"

namespace deepvo::nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major N-d array with an optional gradient buffer of the same size.
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;
  using VectorMap = Eigen::Map<Vector<Scalar>>;
  using ConstVectorMap = Eigen::Map<const Vector<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Vector<Scalar>::Constant(shape_size(shape_), fill)) {}

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_[static_cast<std::size_t>(i)]; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  VectorMap values() { return VectorMap(data_.data(), data_.size()); }
  ConstVectorMap values() const { return ConstVectorMap(data_.data(), data_.size()); }

  /// View as rows x cols; rows * cols must equal size().
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  /// (dim 0) x (everything else).
  MatrixMap as_matrix() { return matrix(shape_.at(0), size() / shape_.at(0)); }
  ConstMatrixMap as_matrix() const { return matrix(shape_.at(0), size() / shape_.at(0)); }

  bool has_grad() const { return grad_.has_value(); }
  void ensure_grad() {
    if (!grad_) grad_ = Vector<Scalar>::Zero(data_.size());
  }
  void zero_grad() {
    if (grad_) grad_->setZero();
  }
  VectorMap grad() {
    if (!grad_) throw Error(Errc::MissingGrad, "tensor has no gradient buffer");
    return VectorMap(grad_->data(), grad_->size());
  }
  ConstVectorMap grad() const {
    if (!grad_) throw Error(Errc::MissingGrad, "tensor has no gradient buffer");
    return ConstVectorMap(grad_->data(), grad_->size());
  }

  /// Same data under a new shape of equal size.
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw Error(Errc::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.values() = data_.template cast<Other>();
    return out;
  }

  void set_zero() { data_.setZero(); }

 private:
  void check_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw Error(Errc::ShapeMismatch, "matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                                           " of tensor " + shape_string(shape_));
    }
  }

  Shape shape_;
  Vector<Scalar> data_;
  std::optional<Vector<Scalar>> grad_;
};

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw Error(Errc::ShapeMismatch,
                std::string(what) + ": expected " + shape_string(want) + ", got " + shape_string(got));
  }
}

}  // namespace deepvo::nn
