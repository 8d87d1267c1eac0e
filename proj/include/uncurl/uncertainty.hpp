// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "uncurl/distribution.hpp"
#include "uncurl/forward_mode.hpp"
#include "uncurl/rng.hpp"
#include "uncurl/tensor.hpp"

namespace uncurl {

/// Predictive uncertainty of one prediction site, in nats.
/// total == aleatoric + epistemic holds exactly (epistemic is the BALD term).
struct UncertaintyDecomposition {
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

struct EnsembleConfig {
  std::size_t n_samples = 100;
  double dropout_rate = 0.1;

  void validate() const;
};

/// Member k of an ensemble draws its masks from counter base k * kEnsembleStride
/// of the caller's stream, so any subset of members can be replayed on its own.
inline constexpr std::uint64_t kEnsembleStride = std::uint64_t{1} << 32;

/// -sum p log p in nats, 0 log 0 := 0.
double entropy(const CategoricalDistribution& dist);

/// total = H[mean member], aleatoric = mean H[member], epistemic = total - aleatoric.
/// An ensemble whose members are all identical yields epistemic == 0 exactly.
UncertaintyDecomposition decompose(std::span<const CategoricalDistribution> members);

/// Sample Pearson correlation. Throws std::domain_error("degenerate sample")
/// when either input has zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);
/// Pearson correlation of average ranks (ties share the mean rank).
double spearman(std::span<const double> xs, std::span<const double> ys);
/// 1-based ranks; tied values get the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// A model the Monte-Carlo-dropout ensemble can sample: `predict_probs`
/// returns one probability row per prediction site, shape [sites, classes].
template <class M>
concept StochasticPredictor = requires(const M& m, const typename M::Input& in, const ForwardMode& mode) {
  typename M::Input;
  { m.dropout_site_count() } -> std::convertible_to<std::size_t>;
  { m.predict_probs(in, mode) } -> std::same_as<Tensor>;
};

/// Ensemble of `n_samples` stochastic forward passes. Result is site-major:
/// result[site][member].
template <StochasticPredictor M>
std::vector<std::vector<CategoricalDistribution>> mc_ensemble(const M& model, const typename M::Input& input,
                                                              const EnsembleConfig& config, const RngStream& rng) {
  config.validate();
  if (config.dropout_rate > 0.0 && model.dropout_site_count() == 0) {
    throw std::invalid_argument("no stochastic sites");
  }
  std::vector<std::vector<CategoricalDistribution>> sites;
  for (std::size_t k = 0; k < config.n_samples; ++k) {
    RngStream member = rng.at(rng.counter() + k * kEnsembleStride);
    const Tensor probs = model.predict_probs(input, ForwardMode::train(member, config.dropout_rate));
    const std::size_t n_sites = probs.dim(0);
    if (k == 0) sites.resize(n_sites);
    for (std::size_t s = 0; s < n_sites; ++s) {
      const auto row = probs.row(s);
      sites[s].emplace_back(std::vector<double>(row.begin(), row.end()));
    }
  }
  return sites;
}

/// mc_ensemble followed by decompose at every site.
template <StochasticPredictor M>
std::vector<UncertaintyDecomposition> mc_decompose(const M& model, const typename M::Input& input,
                                                   const EnsembleConfig& config, const RngStream& rng) {
  const auto sites = mc_ensemble(model, input, config, rng);
  std::vector<UncertaintyDecomposition> out;
  out.reserve(sites.size());
  for (const auto& members : sites) out.push_back(decompose(members));
  return out;
}

}  // namespace uncurl
