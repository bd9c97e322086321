#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "msecnn/errors.hpp"

namespace msecnn {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline std::string shape_str(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense row-major tensor. Rank is dynamic; the last axis varies fastest.
/// Indexing is bounds-unchecked in release builds, same policy as Eigen.
template <typename Scalar>
struct Tensor {
  std::vector<Index> shape;
  std::vector<Scalar> data;

  Tensor() = default;

  explicit Tensor(std::vector<Index> shape_in)
      : shape(std::move(shape_in)), data(checked_numel(shape), Scalar(0)) {}

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<Index> shape, Scalar value) {
    Tensor t(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
  }

  Index dim() const { return static_cast<Index>(shape.size()); }

  Index numel() const { return static_cast<Index>(data.size()); }

  Index size(Index axis) const { return shape[static_cast<size_t>(axis)]; }

  Scalar& operator[](Index i) { return data[static_cast<size_t>(i)]; }
  const Scalar& operator[](Index i) const { return data[static_cast<size_t>(i)]; }

  Scalar& operator()(Index i, Index j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const Scalar& operator()(Index i, Index j) const {
    return data[static_cast<size_t>(i * shape[1] + j)];
  }

  Scalar& operator()(Index i, Index j, Index k) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  const Scalar& operator()(Index i, Index j, Index k) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  Scalar& operator()(Index i, Index j, Index k, Index l) {
    return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
  }
  const Scalar& operator()(Index i, Index j, Index k, Index l) const {
    return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<Other>(data[i]);
    return out;
  }

  /// Views the whole buffer as a rows x cols row-major matrix.
  Eigen::Map<MatrixX<Scalar>> as_matrix(Index rows, Index cols) {
    if (rows * cols != numel())
      throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not cover tensor of " + std::to_string(numel()) + " elements");
    return Eigen::Map<MatrixX<Scalar>>(data.data(), rows, cols);
  }

  Eigen::Map<const MatrixX<Scalar>> as_matrix(Index rows, Index cols) const {
    if (rows * cols != numel())
      throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " does not cover tensor of " + std::to_string(numel()) + " elements");
    return Eigen::Map<const MatrixX<Scalar>>(data.data(), rows, cols);
  }

  Eigen::Map<VectorX<Scalar>> as_vector() {
    return Eigen::Map<VectorX<Scalar>>(data.data(), numel());
  }

  Eigen::Map<const VectorX<Scalar>> as_vector() const {
    return Eigen::Map<const VectorX<Scalar>>(data.data(), numel());
  }

 private:
  static size_t checked_numel(const std::vector<Index>& shape) {
    size_t n = 1;
    for (Index d : shape) {
      if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
      n *= static_cast<size_t>(d);
    }
    return n;
  }
};

template <typename Scalar>
void require_shape(const Tensor<Scalar>& t, const std::vector<Index>& want,
                   const char* what) {
  if (t.shape != want)
    throw ShapeError(std::string(what) + ": expected shape " + shape_str(want) + ", got " +
                     shape_str(t.shape));
}

template <typename Scalar>
void require_dim(const Tensor<Scalar>& t, Index d, const char* what) {
  if (t.dim() != d)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(d) +
                     "-d tensor, got shape " + shape_str(t.shape));
}

}  // namespace msecnn
