// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uncurl/rng.hpp"
#include "uncurl/tensor.hpp"

namespace uncurl {

/// Data-row indicator with popcount == k.
struct SubsetMask {
  std::vector<std::uint8_t> indicator;
  std::size_t k = 0;

  static SubsetMask from_indices(std::size_t n, std::span<const std::size_t> indices);
  static SubsetMask full(std::size_t n);
  std::vector<std::size_t> indices() const;

  friend bool operator==(const SubsetMask&, const SubsetMask&) = default;
};

enum class SelectionKind { kFull, kTopKResidual, kExhaustiveOracle, kRandom };

std::string to_string(SelectionKind kind);
SelectionKind parse_selection_kind(const std::string& name);

inline constexpr std::uint64_t kDefaultExhaustiveCap = 1'000'000;

/// Training loss after one masked gradient step from residual `epsilon`:
///   0.5 * || (I - lambda Z Z^T Diag(mask)) epsilon ||^2.
double lookahead_objective(const SubsetMask& mask, const Tensor& z, std::span<const double> epsilon, double lambda);

/// The k rows with the largest |epsilon_i|; ties go to the lower index.
SubsetMask topk_residual_mask(std::span<const double> epsilon, std::size_t k);

/// Number of k-subsets of n items, saturating at UINT64_MAX.
std::uint64_t binomial(std::size_t n, std::size_t k);

/// Minimizer of lookahead_objective over all k-subsets, enumerated in
/// lexicographic order; the first (lexicographically smallest) minimizer wins.
/// Throws std::length_error when C(N, k) exceeds `cap`.
SubsetMask exhaustive_optimal_mask(const Tensor& z, std::span<const double> epsilon, double lambda, std::size_t k,
                                   std::uint64_t cap = kDefaultExhaustiveCap);

/// Uniformly random k-subset (partial Fisher-Yates).
SubsetMask random_mask(std::size_t n, std::size_t k, RngStream& rng);

}  // namespace uncurl
