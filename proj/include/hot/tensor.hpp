#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "hot/memory.hpp"

namespace hot {

/// Extents of a dense tensor. Every dim is >= 1 and the element count is
/// checked against size_t overflow on construction.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t order() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const { return numel_; }
  const std::vector<std::size_t>& dims() const { return dims_; }

  /// Row-major strides (last index fastest).
  std::vector<std::size_t> strides() const;

  /// Product of dims in [first, last).
  std::size_t span_product(std::size_t first, std::size_t last) const;

  Shape with_dim(std::size_t mode, std::size_t extent) const;

  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) { return a.dims_ == b.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::size_t numel_ = 0;
};

/// Order-k array of doubles, row-major. Value semantics; copies are deep.
class DenseTensor {
 public:
  using Storage = std::vector<double, TrackedAllocator<double>>;

  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0);
  DenseTensor(Shape shape, std::span<const double> values);
  DenseTensor(Shape shape, std::initializer_list<double> values);

  static DenseTensor matrix(std::size_t rows, std::size_t cols,
                            std::initializer_list<double> values);
  static DenseTensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.order(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_[mode]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::span<const std::size_t> index);
  double at(std::span<const std::size_t> index) const;

  /// Matrix access for order-2 tensors.
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_[1]; }

  /// Same data, new shape with identical element count.
  DenseTensor reshaped(Shape shape) const;

  bool all_finite() const;

 private:
  std::size_t flat_index(std::span<const std::size_t> index) const;

  Shape shape_;
  Storage data_;
};

/// Mode-i unfolding (0-based mode). Result is N_i x prod_{j!=i} N_j; the
/// remaining modes index the columns in row-major order, the earliest
/// remaining mode varying slowest. With this ordering
///   matricize(T x_0 A_0 ... x_{k-1} A_{k-1}, k) = matricize(T, k) (A_0 (x) ... (x) A_{k-1})^T.
DenseTensor matricize(const DenseTensor& t, std::size_t mode);

/// Inverse of matricize for a given target shape.
DenseTensor fold(const DenseTensor& m, std::size_t mode, const Shape& target);

/// Mode-n product: result[.., a, ..] = sum_j t[.., j, ..] * a_mat(a, j).
/// a_mat is d x N_mode; the result has N_mode replaced by d.
DenseTensor mode_product(const DenseTensor& t, const DenseTensor& a_mat, std::size_t mode);

/// Scales slice `j` along `mode` by weights[j].
DenseTensor scale_mode(const DenseTensor& t, std::span<const double> weights, std::size_t mode);

enum class Pooling { kSum, kMean };

/// Reduces every mode except `mode` and the last (hidden) one. Returns an
/// N_mode x D_H matrix. For an order-2 input this is the identity.
DenseTensor pool_except(const DenseTensor& t, std::size_t mode, Pooling pooling = Pooling::kSum);

inline DenseTensor pool_sum_except(const DenseTensor& t, std::size_t mode) {
  return pool_except(t, mode, Pooling::kSum);
}

/// Reorders modes: result mode m is input mode perm[m].
DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm);

/// Elementwise helpers used across modules.
DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor subtract(const DenseTensor& a, const DenseTensor& b);
DenseTensor scaled(const DenseTensor& a, double s);
double max_abs_diff(const DenseTensor& a, const DenseTensor& b);
double frobenius_norm(const DenseTensor& a);

/// Iterates all multi-indices of a shape in row-major order.
class IndexCounter {
 public:
  explicit IndexCounter(const Shape& shape) : dims_(shape.dims()), index_(shape.order(), 0) {}
  const std::vector<std::size_t>& index() const { return index_; }
  /// Advances to the next index; returns false after the last one.
  bool next();

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> index_;
};

}  // namespace hot
