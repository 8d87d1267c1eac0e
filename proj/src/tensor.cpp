// SPDX-License-Identifier: Apache-2.0
#include "uncurl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace uncurl {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  if (!std::isfinite(fill)) throw std::domain_error("tensor fill value is not finite");
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_to_string(shape_));
  }
  check_finite("tensor construction");
}

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(n_rows * n_cols);
  for (const auto& r : rows) {
    if (r.size() != n_cols) throw std::invalid_argument("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({n_rows, n_cols}, std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[axis];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t cols = shape_.back();
  return std::span<const double>(data_).subspan(r * cols, cols);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t cols = shape_.back();
  return std::span<double>(data_).subspan(r * cols, cols);
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

void Tensor::check_finite(std::string_view what) const {
  const bool ok = std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  if (!ok) throw std::domain_error("non-finite value in " + std::string(what));
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

}  // namespace uncurl
