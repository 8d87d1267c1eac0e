// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

#include "uncurl/autograd.hpp"
#include "uncurl/rng.hpp"
#include "uncurl/tensor.hpp"

namespace uncurl {

enum class LrSchedule { kConstant, kCosine };

struct SgdConfig {
  double learning_rate = 0.01;
  LrSchedule schedule = LrSchedule::kConstant;
  std::size_t total_steps = 0;  // cosine horizon

  void validate() const;
  /// Constant, or lr * (1 + cos(pi * min(step, T) / T)) / 2 for the cosine schedule.
  double lr_at(std::size_t step) const;
};

/// params <- params - lr(step) * grads.
void sgd_step(Tensor& params, const Tensor& grads, const SgdConfig& config, std::size_t step);
/// Applies sgd_step to every parameter using its accumulated gradient.
void sgd_step(std::span<Var> params, const SgdConfig& config, std::size_t step);
void zero_grad(std::span<Var> params);

/// Inverted dropout mask: 0 with probability `rate`, else 1 / (1 - rate).
/// One uniform draw per entry is consumed for every rate, including 0.
Tensor dropout_mask(const Shape& shape, double rate, RngStream& rng);

}  // namespace uncurl
