// SPDX-License-Identifier: Apache-2.0
#include "uncurl/models/linear.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "uncurl/linalg.hpp"

namespace uncurl {

void LinearSystem::validate() const {
  if (z.rank() != 2 || z.dim(0) < 1 || z.dim(1) < 1) throw std::invalid_argument("Z must be a non-empty [N, D] matrix");
  if (d.shape() != Shape{z.dim(0)}) throw std::invalid_argument("d must have length N = " + std::to_string(z.dim(0)));
  if (w.shape() != Shape{z.dim(1)}) throw std::invalid_argument("w must have length D = " + std::to_string(z.dim(1)));
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("step size lambda must be positive");
}

Tensor linear_residual(const LinearSystem& sys) {
  sys.validate();
  auto eps = linalg::matvec(sys.z, sys.w.data());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] -= sys.d[i];
  return Tensor::vector(std::move(eps));
}

double linear_loss(const LinearSystem& sys) { return 0.5 * linalg::squared_norm(linear_residual(sys).data()); }

Tensor linear_gd_step(const LinearSystem& sys, std::optional<std::span<const std::uint8_t>> mask) {
  Tensor eps = linear_residual(sys);
  if (mask) {
    if (mask->size() != sys.rows()) {
      throw std::invalid_argument("mask length " + std::to_string(mask->size()) + " does not match N = " +
                                  std::to_string(sys.rows()));
    }
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] *= (*mask)[i] ? 1.0 : 0.0;
  }
  const auto grad = linalg::matvec_transposed(sys.z, eps.data());
  Tensor w = sys.w;
  for (std::size_t j = 0; j < w.size(); ++j) w[j] -= sys.lambda * grad[j];
  w.check_finite("linear_gd_step");
  return w;
}

Var linear_loss_var(const Tensor& z, const Tensor& d, const Var& w) {
  const Var residual = sub(matvec(Var::constant(z), w), Var::constant(d));
  return scale(sum_squares(residual), 0.5);
}

}  // namespace uncurl
