// SPDX-License-Identifier: Apache-2.0
#include "uncurl/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace uncurl {

void EnsembleConfig::validate() const {
  if (n_samples < 1) throw std::invalid_argument("ensemble needs at least one sample");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
}

double entropy(const CategoricalDistribution& dist) {
  double h = 0.0;
  for (double p : dist.probs()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

UncertaintyDecomposition decompose(std::span<const CategoricalDistribution> members) {
  if (members.empty()) throw std::invalid_argument("decompose: empty ensemble");
  const std::size_t vocab = members.front().size();
  for (const auto& m : members) {
    if (m.size() != vocab) {
      throw std::invalid_argument("decompose: mixed vocabulary sizes " + std::to_string(vocab) + " and " +
                                  std::to_string(m.size()));
    }
  }
  const bool all_same = std::all_of(members.begin(), members.end(), [&](const auto& m) { return m == members.front(); });
  if (all_same) {
    const double h = entropy(members.front());
    return {h, h, 0.0};
  }

  const double n = static_cast<double>(members.size());
  std::vector<double> mean_probs(vocab, 0.0);
  double mean_entropy = 0.0;
  for (const auto& m : members) {
    for (std::size_t x = 0; x < vocab; ++x) mean_probs[x] += m[x];
    mean_entropy += entropy(m);
  }
  mean_entropy /= n;
  double total_mass = 0.0;
  for (double& p : mean_probs) {
    p /= n;
    total_mass += p;
  }
  // Renormalize away accumulated rounding before constructing the distribution.
  for (double& p : mean_probs) p /= total_mass;

  const double predictive = entropy(CategoricalDistribution(std::move(mean_probs)));
  UncertaintyDecomposition d;
  d.aleatoric = mean_entropy;
  d.epistemic = predictive - mean_entropy;
  // Defined as the sum so the identity holds bit-for-bit; differs from
  // `predictive` by at most one rounding.
  d.total = d.aleatoric + d.epistemic;
  return d;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need at least two samples");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw std::domain_error("degenerate sample");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: length mismatch");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

}  // namespace uncurl
