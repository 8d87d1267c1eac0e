// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uncurl/tensor.hpp"

namespace uncurl {

/// Probability vector over a vocabulary or class set.
/// Entries are non-negative and sum to 1 within 1e-9.
class CategoricalDistribution {
 public:
  explicit CategoricalDistribution(std::vector<double> probs);

  static CategoricalDistribution uniform(std::size_t size);
  static CategoricalDistribution one_hot(std::size_t size, std::size_t index);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  friend bool operator==(const CategoricalDistribution&, const CategoricalDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Row-wise softmax over the last axis, with max subtraction.
/// Throws std::domain_error("non-finite logits") on NaN/Inf input.
std::vector<CategoricalDistribution> softmax(const Tensor& logits);
Tensor softmax_rows(const Tensor& logits);

/// Numerically stable log-softmax of one row.
std::vector<double> log_softmax(std::span<const double> logits);

/// -sum_x target(x) * log_probs(x), with 0 * log 0 := 0.
double cross_entropy(const CategoricalDistribution& target, std::span<const double> log_probs);

}  // namespace uncurl
