// SPDX-License-Identifier: Apache-2.0
#include "uncurl/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "uncurl/linalg.hpp"

namespace uncurl {

namespace {

void require_k(std::size_t n, std::size_t k) {
  if (k < 1 || k > n) {
    throw std::invalid_argument("k = " + std::to_string(k) + " out of range [1, " + std::to_string(n) + "]");
  }
}

}  // namespace

SubsetMask SubsetMask::from_indices(std::size_t n, std::span<const std::size_t> indices) {
  SubsetMask m;
  m.indicator.assign(n, 0);
  for (std::size_t i : indices) {
    if (i >= n) throw std::out_of_range("subset index out of range");
    if (m.indicator[i]) throw std::invalid_argument("duplicate subset index");
    m.indicator[i] = 1;
  }
  m.k = indices.size();
  return m;
}

SubsetMask SubsetMask::full(std::size_t n) {
  SubsetMask m;
  m.indicator.assign(n, 1);
  m.k = n;
  return m;
}

std::vector<std::size_t> SubsetMask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < indicator.size(); ++i) {
    if (indicator[i]) out.push_back(i);
  }
  return out;
}

std::string to_string(SelectionKind kind) {
  switch (kind) {
    case SelectionKind::kFull: return "full";
    case SelectionKind::kTopKResidual: return "topk_residual";
    case SelectionKind::kExhaustiveOracle: return "exhaustive_oracle";
    case SelectionKind::kRandom: return "random";
  }
  return "full";
}

SelectionKind parse_selection_kind(const std::string& name) {
  if (name == "full") return SelectionKind::kFull;
  if (name == "topk_residual") return SelectionKind::kTopKResidual;
  if (name == "exhaustive_oracle") return SelectionKind::kExhaustiveOracle;
  if (name == "random") return SelectionKind::kRandom;
  throw std::invalid_argument("unknown selection policy '" + name + "'");
}

double lookahead_objective(const SubsetMask& mask, const Tensor& z, std::span<const double> epsilon, double lambda) {
  if (z.rank() != 2 || z.dim(0) != epsilon.size() || mask.indicator.size() != epsilon.size()) {
    throw std::invalid_argument("lookahead_objective: inconsistent shapes");
  }
  std::vector<double> masked(epsilon.begin(), epsilon.end());
  for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= mask.indicator[i] ? 1.0 : 0.0;
  const auto step = linalg::matvec(z, linalg::matvec_transposed(z, masked));
  double total = 0.0;
  for (std::size_t i = 0; i < epsilon.size(); ++i) {
    const double r = epsilon[i] - lambda * step[i];
    total += r * r;
  }
  return 0.5 * total;
}

SubsetMask topk_residual_mask(std::span<const double> epsilon, std::size_t k) {
  require_k(epsilon.size(), k);
  std::vector<std::size_t> order(epsilon.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(epsilon[a]) > std::abs(epsilon[b]); });
  order.resize(k);
  return SubsetMask::from_indices(epsilon.size(), order);
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    const std::uint64_t num = n - k + i;
    // result * num / i stays integral at every step
    if (result > std::numeric_limits<std::uint64_t>::max() / num) return std::numeric_limits<std::uint64_t>::max();
    result = result * num / i;
  }
  return result;
}

SubsetMask exhaustive_optimal_mask(const Tensor& z, std::span<const double> epsilon, double lambda, std::size_t k,
                                   std::uint64_t cap) {
  const std::size_t n = epsilon.size();
  require_k(n, k);
  const std::uint64_t count = binomial(n, k);
  if (count > cap) {
    throw std::length_error("exhaustive search over C(" + std::to_string(n) + ", " + std::to_string(k) +
                            ") = " + std::to_string(count) + " subsets exceeds the cap of " + std::to_string(cap));
  }
  std::vector<std::size_t> combo(k);
  std::iota(combo.begin(), combo.end(), 0);
  SubsetMask best;
  double best_value = std::numeric_limits<double>::infinity();
  while (true) {
    SubsetMask candidate = SubsetMask::from_indices(n, combo);
    const double value = lookahead_objective(candidate, z, epsilon, lambda);
    if (value < best_value) {
      best_value = value;
      best = std::move(candidate);
    }
    // next combination in lexicographic order
    std::size_t i = k;
    while (i > 0 && combo[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++combo[i - 1];
    for (std::size_t j = i; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }
  return best;
}

SubsetMask random_mask(std::size_t n, std::size_t k, RngStream& rng) {
  require_k(n, k);
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return SubsetMask::from_indices(n, pool);
}

}  // namespace uncurl
