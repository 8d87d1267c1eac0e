// SPDX-License-Identifier: Apache-2.0
#include "uncurl/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace uncurl {

namespace {

constexpr double kSumTolerance = 1e-9;

void softmax_into(std::span<const double> logits, std::span<double> out) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    total += out[i];
  }
  for (double& p : out) p /= total;
}

void require_finite_logits(const Tensor& logits) {
  for (double v : logits.data()) {
    if (!std::isfinite(v)) throw std::domain_error("non-finite logits");
  }
  if (logits.rank() == 0 || logits.shape().back() == 0) {
    throw std::invalid_argument("softmax needs a non-empty last axis");
  }
}

}  // namespace

CategoricalDistribution::CategoricalDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("empty categorical distribution");
  double total = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) throw std::invalid_argument("invalid distribution: negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw std::invalid_argument("invalid distribution: entries sum to " + std::to_string(total));
  }
}

CategoricalDistribution CategoricalDistribution::uniform(std::size_t size) {
  return CategoricalDistribution(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

CategoricalDistribution CategoricalDistribution::one_hot(std::size_t size, std::size_t index) {
  if (index >= size) throw std::out_of_range("one_hot index out of range");
  std::vector<double> probs(size, 0.0);
  probs[index] = 1.0;
  return CategoricalDistribution(std::move(probs));
}

Tensor softmax_rows(const Tensor& logits) {
  require_finite_logits(logits);
  Tensor out(logits.shape());
  const std::size_t width = logits.shape().back();
  const std::size_t rows = logits.size() / width;
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_into(logits.data().subspan(r * width, width), out.data().subspan(r * width, width));
  }
  return out;
}

std::vector<CategoricalDistribution> softmax(const Tensor& logits) {
  const Tensor probs = softmax_rows(logits);
  const std::size_t width = probs.shape().back();
  std::vector<CategoricalDistribution> out;
  out.reserve(probs.size() / width);
  for (std::size_t r = 0; r < probs.size() / width; ++r) {
    auto row = probs.data().subspan(r * width, width);
    out.emplace_back(std::vector<double>(row.begin(), row.end()));
  }
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("log_softmax of empty row");
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::domain_error("non-finite logits");
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - max_logit);
  const double log_norm = max_logit + std::log(total);
  std::vector<double> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), [&](double v) { return v - log_norm; });
  return out;
}

double cross_entropy(const CategoricalDistribution& target, std::span<const double> log_probs) {
  if (target.size() != log_probs.size()) {
    throw std::invalid_argument("cross_entropy: target has " + std::to_string(target.size()) +
                                " classes but log_probs has " + std::to_string(log_probs.size()));
  }
  double loss = 0.0;
  for (std::size_t x = 0; x < log_probs.size(); ++x) {
    if (target[x] > 0.0) loss -= target[x] * log_probs[x];
  }
  return loss;
}

}  // namespace uncurl
