// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "uncurl/autograd.hpp"
#include "uncurl/tensor.hpp"

namespace uncurl {

/// y = sum_j c_j x^j, coefficients in increasing power order.
struct PolynomialModel {
  Tensor coefficients;

  std::size_t degree() const { return coefficients.size() - 1; }
};

/// Horner evaluation at every x.
std::vector<double> poly_eval(const PolynomialModel& model, std::span<const double> xs);

/// Feature matrix [x^0, x^1, ..., x^degree] per row.
Tensor vandermonde(std::span<const double> xs, std::size_t degree);

/// 0.5 * ||V c - y||^2 on the autograd graph.
Var poly_loss_var(const Var& coefficients, const Tensor& features, std::span<const double> ys);

/// One gradient step of poly_loss_var with learning rate `lr`.
PolynomialModel poly_gd_step(const PolynomialModel& model, std::span<const double> xs, std::span<const double> ys,
                             double lr);

}  // namespace uncurl
