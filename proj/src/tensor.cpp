#include "arcil/tensor.hpp"

#include "arcil/error.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace arcil {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() == 1) return 1;
  throw DimensionError("rows() needs rank 1 or 2, got " + shape_string(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  throw DimensionError("cols() needs rank 1 or 2, got " + shape_string(shape_));
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

MatrixMap Tensor::mat() {
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::mat() const {
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> idx) const {
  const std::size_t c = cols();
  std::vector<double> out;
  out.reserve(idx.size() * c);
  for (std::size_t i : idx) {
    if (i >= rows()) throw DimensionError("row index " + std::to_string(i) + " out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor({idx.size(), c}, std::move(out));
}

Tensor Tensor::concat_rows(const Tensor& a, const Tensor& b) {
  if (a.size() == 0 && a.rank() == 2 && a.rows() == 0) return b;
  if (b.size() == 0 && b.rank() == 2 && b.rows() == 0) return a;
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: column mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(a.data_);
  out.insert(out.end(), b.data_.begin(), b.data_.end());
  return Tensor({a.rows() + b.rows(), a.cols()}, std::move(out));
}

}  // namespace arcil
