// SPDX-License-Identifier: Apache-2.0
#include "uncurl/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uncurl {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (schedule == LrSchedule::kCosine && total_steps == 0) {
    throw std::invalid_argument("cosine schedule needs total_steps > 0");
  }
}

double SgdConfig::lr_at(std::size_t step) const {
  if (schedule == LrSchedule::kConstant) return learning_rate;
  const double progress = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return 0.5 * learning_rate * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_step(Tensor& params, const Tensor& grads, const SgdConfig& config, std::size_t step) {
  if (params.shape() != grads.shape()) {
    throw std::invalid_argument("sgd_step: parameter shape " + shape_to_string(params.shape()) +
                                " does not match gradient shape " + shape_to_string(grads.shape()));
  }
  config.validate();
  const double lr = config.lr_at(step);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
  params.check_finite("sgd_step");
}

void sgd_step(std::span<Var> params, const SgdConfig& config, std::size_t step) {
  for (Var& p : params) {
    if (p.has_grad()) sgd_step(p.mutable_value(), p.grad(), config, step);
  }
}

void zero_grad(std::span<Var> params) {
  for (Var& p : params) p.zero_grad();
}

Tensor dropout_mask(const Shape& shape, double rate, RngStream& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  Tensor mask(shape);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace uncurl
