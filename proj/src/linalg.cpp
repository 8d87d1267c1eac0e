// SPDX-License-Identifier: Apache-2.0
#include "uncurl/linalg.hpp"

#include <stdexcept>

namespace uncurl::linalg {

std::vector<double> matvec(const Tensor& a, std::span<const double> x) {
  if (a.rank() != 2 || a.dim(1) != x.size()) throw std::invalid_argument("matvec: shape mismatch");
  std::vector<double> out(a.dim(0), 0.0);
  for (std::size_t i = 0; i < a.dim(0); ++i) out[i] = dot(a.row(i), x);
  return out;
}

std::vector<double> matvec_transposed(const Tensor& a, std::span<const double> y) {
  if (a.rank() != 2 || a.dim(0) != y.size()) throw std::invalid_argument("matvec_transposed: shape mismatch");
  std::vector<double> out(a.dim(1), 0.0);
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    const auto row = a.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j] * y[i];
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

}  // namespace uncurl::linalg
