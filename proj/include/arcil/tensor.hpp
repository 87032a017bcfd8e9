#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace arcil {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense row-major array of doubles with a shape. Rank 0 (a scalar) has an
/// empty shape and one element.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  /// Builds a [rows.size(), cols] matrix from nested initializer lists.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  // Rank-2 accessors. A rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  MatrixMap mat();
  ConstMatrixMap mat() const;

  double item() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  Tensor reshaped(std::vector<std::size_t> shape) const;

  /// Rows selected by index, in the given order.
  Tensor gather_rows(std::span<const std::size_t> idx) const;
  /// Stacks rows of `a` then `b`; both must have equal column counts.
  static Tensor concat_rows(const Tensor& a, const Tensor& b);

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace arcil
