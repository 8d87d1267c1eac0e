// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "uncurl/autograd.hpp"
#include "uncurl/tensor.hpp"

namespace uncurl {

/// Least-squares system Z w = d trained by gradient descent with step `lambda`.
struct LinearSystem {
  Tensor z;  // [N, D]
  Tensor d;  // [N]
  Tensor w;  // [D]
  double lambda = 0.1;

  std::size_t rows() const { return z.dim(0); }
  std::size_t cols() const { return z.dim(1); }
  void validate() const;
};

/// Residual Z w - d.
Tensor linear_residual(const LinearSystem& sys);
/// 0.5 * ||Z w - d||^2.
double linear_loss(const LinearSystem& sys);
/// w - lambda * (Diag(mask) Z)^T (Z w - d). An absent mask means all rows.
Tensor linear_gd_step(const LinearSystem& sys, std::optional<std::span<const std::uint8_t>> mask = std::nullopt);

/// 0.5 * ||Z w - d||^2 recorded on the autograd graph.
Var linear_loss_var(const Tensor& z, const Tensor& d, const Var& w);

}  // namespace uncurl
