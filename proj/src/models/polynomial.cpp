// SPDX-License-Identifier: Apache-2.0
#include "uncurl/models/polynomial.hpp"

#include <stdexcept>

#include "uncurl/sgd.hpp"

namespace uncurl {

std::vector<double> poly_eval(const PolynomialModel& model, std::span<const double> xs) {
  if (model.coefficients.empty()) throw std::invalid_argument("polynomial has no coefficients");
  const auto c = model.coefficients.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = c.size(); j-- > 0;) acc = acc * xs[i] + c[j];
    out[i] = acc;
  }
  return out;
}

Tensor vandermonde(std::span<const double> xs, std::size_t degree) {
  Tensor v({xs.size(), degree + 1});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double power = 1.0;
    for (std::size_t j = 0; j <= degree; ++j) {
      v.at(i, j) = power;
      power *= xs[i];
    }
  }
  return v;
}

Var poly_loss_var(const Var& coefficients, const Tensor& features, std::span<const double> ys) {
  const Var prediction = matvec(Var::constant(features), coefficients);
  const Var residual = sub(prediction, Var::constant(Tensor::vector({ys.begin(), ys.end()})));
  return scale(sum_squares(residual), 0.5);
}

PolynomialModel poly_gd_step(const PolynomialModel& model, std::span<const double> xs, std::span<const double> ys,
                             double lr) {
  if (xs.size() != ys.size()) throw std::invalid_argument("poly_gd_step: xs and ys differ in length");
  Var c = Var::parameter(model.coefficients);
  backward(poly_loss_var(c, vandermonde(xs, model.degree()), ys));
  PolynomialModel next{model.coefficients};
  sgd_step(next.coefficients, c.grad(), SgdConfig{lr}, 0);
  return next;
}

}  // namespace uncurl
