// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uncurl/autograd.hpp"
#include "uncurl/distribution.hpp"
#include "uncurl/uncertainty.hpp"

namespace uncurl {

// Token-level weights w_t(x) of the weighted log-likelihood objective
//   minimize  -(1/Z) sum_t sum_x w_t(x) log p(x | context_t).
// Every variant is normalized by the number of rows it covers, except the
// masked delta, which averages over the selected rows only.

/// w_t(x) = [x == label_t]. Plain maximum likelihood.
struct MleDelta {
  std::vector<std::size_t> labels;
};
/// w_t(x) = [x == label_t] * mask_t, mask entries in {0, 1}.
struct MaskedMleDelta {
  std::vector<std::size_t> labels;
  std::vector<std::uint8_t> mask;
};
/// w_t(x) = p_teacher(x | context_t). Forward distillation.
struct Teacher {
  std::vector<CategoricalDistribution> dists;
};
/// w_t(x) = p_teacher(x | context_t) * [x in admissible_t], not renormalized.
struct TruncatedTeacher {
  std::vector<CategoricalDistribution> dists;
  std::vector<std::vector<std::size_t>> admissible;
};
/// w_t(x) = A(x | context_t), supplied externally as a [T, V] table.
struct Advantage {
  Tensor values;
};

using WeightFunction = std::variant<MleDelta, MaskedMleDelta, Teacher, TruncatedTeacher, Advantage>;

/// Dense [rows, vocab] weight table for `weights`.
Tensor weight_matrix(const WeightFunction& weights, std::size_t rows, std::size_t vocab);

/// Negated weighted log-likelihood of `log_probs` ([T, V]).
Var weighted_loss(const Var& log_probs, const WeightFunction& weights);

/// Teacher weights restricted to each site's `top_k` most probable classes
/// (ties go to the lower class index).
WeightFunction truncated_kl_weights(std::span<const CategoricalDistribution> teacher_dists, std::size_t top_k);

enum class QuantileScope { kPerBatch, kPerSequence, kGlobal };

std::string to_string(QuantileScope scope);
QuantileScope parse_quantile_scope(const std::string& name);

/// Selection over eligible prediction sites. flags[i] marks site i as kept.
struct TokenMask {
  std::vector<std::uint8_t> flags;
  std::vector<double> selection_metric;
  double quantile = 0.25;
  QuantileScope scope = QuantileScope::kPerBatch;

  std::size_t selected_count() const;
};

/// ceil(q * n), with products within 1e-9 of an integer snapped to it so that
/// e.g. q = 0.7, n = 10 selects 7 rather than 8.
std::size_t quantile_count(double q, std::size_t n);

/// Marks the quantile_count(q, n) sites with the largest metric; ties go to the
/// lower index. With kPerSequence, `groups[i]` names the sequence of site i and
/// the count is taken per sequence. kGlobal treats the input as the whole
/// dataset and selects exactly like kPerBatch.
TokenMask select_mask_by_quantile(std::span<const double> metric, double q,
                                  QuantileScope scope = QuantileScope::kPerBatch,
                                  std::span<const std::size_t> groups = {});

struct TokenLossRecord {
  std::size_t token_id = 0;
  std::size_t position = 0;
  double nll = 0.0;
  double entropy = 0.0;
  std::optional<UncertaintyDecomposition> decomposition;
  bool masked = false;
};

/// Mean NLL over the rows selected by `mask`. Throws if the selection is empty.
Var masked_mle_loss(const Var& log_probs, std::span<const std::size_t> labels, const TokenMask& mask);

struct CombinedLossOptions {
  QuantileScope scope = QuantileScope::kPerBatch;
  std::vector<std::size_t> groups;     // sequence id per row, for kPerSequence
  std::vector<std::size_t> positions;  // recorded in the loss records; defaults to row index
};

struct CombinedLoss {
  Var loss;
  TokenMask mask;
  std::vector<TokenLossRecord> records;
};

/// Per row t: if t is among the top-q rows by current NLL, -log p(label_t);
/// otherwise the cross-entropy against ref_dists[t]. Averaged over all rows.
/// The NLL used for selection is read from the forward values and carries no
/// gradient.
CombinedLoss combined_masked_mle_distill_loss(const Var& student_log_probs, std::span<const std::size_t> labels,
                                              std::span<const CategoricalDistribution> ref_dists, double q,
                                              const CombinedLossOptions& options = {});

/// Realized-label NLL per row of a [T, V] log-probability table.
std::vector<double> token_nll(const Tensor& log_probs, std::span<const std::size_t> labels);
/// Entropy per row of a [T, V] log-probability table.
std::vector<double> token_entropy(const Tensor& log_probs);

}  // namespace uncurl
