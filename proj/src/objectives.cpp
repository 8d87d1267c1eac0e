// SPDX-License-Identifier: Apache-2.0
#include "uncurl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace uncurl {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_rows(std::size_t got, std::size_t rows, const char* what) {
  if (got != rows) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " +
                                std::to_string(got));
  }
}

void set_label_row(Tensor& w, std::size_t t, std::size_t label, double value) {
  if (label >= w.dim(1)) throw std::out_of_range("label " + std::to_string(label) + " outside vocabulary");
  w.at(t, label) = value;
}

void copy_teacher_row(Tensor& w, std::size_t t, const CategoricalDistribution& dist) {
  if (dist.size() != w.dim(1)) {
    throw std::invalid_argument("teacher distribution shape mismatch: " + std::to_string(dist.size()) + " vs " +
                                std::to_string(w.dim(1)));
  }
  std::copy(dist.probs().begin(), dist.probs().end(), w.row(t).begin());
}

}  // namespace

Tensor weight_matrix(const WeightFunction& weights, std::size_t rows, std::size_t vocab) {
  Tensor w({rows, vocab}, 0.0);
  std::visit(Overloaded{
                 [&](const MleDelta& v) {
                   require_rows(v.labels.size(), rows, "MleDelta labels");
                   for (std::size_t t = 0; t < rows; ++t) set_label_row(w, t, v.labels[t], 1.0);
                 },
                 [&](const MaskedMleDelta& v) {
                   require_rows(v.labels.size(), rows, "MaskedMleDelta labels");
                   require_rows(v.mask.size(), rows, "MaskedMleDelta mask");
                   for (std::size_t t = 0; t < rows; ++t) {
                     if (v.mask[t] > 1) throw std::invalid_argument("mask entries must be 0 or 1");
                     if (v.mask[t]) set_label_row(w, t, v.labels[t], 1.0);
                   }
                 },
                 [&](const Teacher& v) {
                   require_rows(v.dists.size(), rows, "Teacher distributions");
                   for (std::size_t t = 0; t < rows; ++t) copy_teacher_row(w, t, v.dists[t]);
                 },
                 [&](const TruncatedTeacher& v) {
                   require_rows(v.dists.size(), rows, "TruncatedTeacher distributions");
                   require_rows(v.admissible.size(), rows, "TruncatedTeacher admissible sets");
                   for (std::size_t t = 0; t < rows; ++t) {
                     if (v.dists[t].size() != vocab) throw std::invalid_argument("teacher distribution shape mismatch");
                     for (std::size_t x : v.admissible[t]) {
                       if (x >= vocab) throw std::out_of_range("admissible token outside vocabulary");
                       w.at(t, x) = v.dists[t][x];
                     }
                   }
                 },
                 [&](const Advantage& v) {
                   if (v.values.shape() != Shape{rows, vocab}) {
                     throw std::invalid_argument("advantage table shape " + shape_to_string(v.values.shape()) +
                                                 " does not match log_probs");
                   }
                   w = v.values;
                 },
             },
             weights);
  return w;
}

Var weighted_loss(const Var& log_probs, const WeightFunction& weights) {
  if (log_probs.value().rank() != 2) throw std::invalid_argument("weighted_loss expects [T, V] log-probabilities");
  const std::size_t rows = log_probs.shape()[0];
  const std::size_t vocab = log_probs.shape()[1];
  if (rows == 0) throw std::invalid_argument("weighted_loss over zero rows");
  const Tensor w = weight_matrix(weights, rows, vocab);
  std::size_t normalizer = rows;
  if (const auto* masked = std::get_if<MaskedMleDelta>(&weights)) {
    normalizer = static_cast<std::size_t>(std::count(masked->mask.begin(), masked->mask.end(), std::uint8_t{1}));
    if (normalizer == 0) throw std::invalid_argument("masked objective selects no tokens");
  }
  return scale(weighted_sum(log_probs, w), -1.0 / static_cast<double>(normalizer));
}

WeightFunction truncated_kl_weights(std::span<const CategoricalDistribution> teacher_dists, std::size_t top_k) {
  TruncatedTeacher out;
  for (const auto& dist : teacher_dists) {
    if (top_k < 1 || top_k > dist.size()) {
      throw std::invalid_argument("top_k " + std::to_string(top_k) + " out of range [1, " + std::to_string(dist.size()) + "]");
    }
    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    order.resize(top_k);
    std::sort(order.begin(), order.end());
    out.admissible.push_back(std::move(order));
    out.dists.push_back(dist);
  }
  return out;
}

std::string to_string(QuantileScope scope) {
  switch (scope) {
    case QuantileScope::kPerBatch: return "per_batch";
    case QuantileScope::kPerSequence: return "per_sequence";
    case QuantileScope::kGlobal: return "global";
  }
  return "per_batch";
}

QuantileScope parse_quantile_scope(const std::string& name) {
  if (name == "per_batch") return QuantileScope::kPerBatch;
  if (name == "per_sequence") return QuantileScope::kPerSequence;
  if (name == "global") return QuantileScope::kGlobal;
  throw std::invalid_argument("unknown quantile scope '" + name + "'");
}

std::size_t TokenMask::selected_count() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

std::size_t quantile_count(double q, std::size_t n) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile must lie in [0, 1]");
  const double raw = q * static_cast<double>(n);
  const double nearest = std::round(raw);
  if (std::abs(raw - nearest) <= 1e-9 * std::max(1.0, raw)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(raw));
}

TokenMask select_mask_by_quantile(std::span<const double> metric, double q, QuantileScope scope,
                                  std::span<const std::size_t> groups) {
  if (metric.empty()) throw std::invalid_argument("no eligible tokens");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile must lie in [0, 1]");
  TokenMask mask;
  mask.flags.assign(metric.size(), 0);
  mask.selection_metric.assign(metric.begin(), metric.end());
  mask.quantile = q;
  mask.scope = scope;

  auto select_top = [&](std::vector<std::size_t> idx) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return metric[a] > metric[b]; });
    const std::size_t keep = quantile_count(q, idx.size());
    for (std::size_t i = 0; i < keep; ++i) mask.flags[idx[i]] = 1;
  };

  if (scope == QuantileScope::kPerSequence) {
    if (groups.size() != metric.size()) throw std::invalid_argument("per-sequence scope needs one group id per site");
    std::map<std::size_t, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < metric.size(); ++i) by_group[groups[i]].push_back(i);
    for (auto& [group, idx] : by_group) select_top(std::move(idx));
  } else {
    std::vector<std::size_t> idx(metric.size());
    std::iota(idx.begin(), idx.end(), 0);
    select_top(std::move(idx));
  }
  return mask;
}

Var masked_mle_loss(const Var& log_probs, std::span<const std::size_t> labels, const TokenMask& mask) {
  if (mask.selected_count() == 0) throw std::invalid_argument("masked_mle_loss: empty selection");
  return weighted_loss(log_probs, MaskedMleDelta{{labels.begin(), labels.end()}, mask.flags});
}

std::vector<double> token_nll(const Tensor& log_probs, std::span<const std::size_t> labels) {
  require_rows(labels.size(), log_probs.dim(0), "token_nll labels");
  std::vector<double> out(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] >= log_probs.dim(1)) throw std::out_of_range("label outside vocabulary");
    out[t] = -log_probs.at(t, labels[t]);
  }
  return out;
}

std::vector<double> token_entropy(const Tensor& log_probs) {
  std::vector<double> out(log_probs.dim(0));
  for (std::size_t t = 0; t < out.size(); ++t) {
    double h = 0.0;
    for (double lp : log_probs.row(t)) {
      const double p = std::exp(lp);
      if (p > 0.0) h -= p * lp;
    }
    out[t] = h;
  }
  return out;
}

CombinedLoss combined_masked_mle_distill_loss(const Var& student_log_probs, std::span<const std::size_t> labels,
                                              std::span<const CategoricalDistribution> ref_dists, double q,
                                              const CombinedLossOptions& options) {
  const Tensor& lp = student_log_probs.value();
  if (lp.rank() != 2) throw std::invalid_argument("combined loss expects [T, V] log-probabilities");
  const std::size_t rows = lp.dim(0);
  const std::size_t vocab = lp.dim(1);
  require_rows(labels.size(), rows, "combined loss labels");
  if (ref_dists.size() != rows) {
    throw std::invalid_argument("misaligned reference: " + std::to_string(ref_dists.size()) +
                                " reference distributions for " + std::to_string(rows) + " positions");
  }
  if (!options.positions.empty()) require_rows(options.positions.size(), rows, "combined loss positions");

  const auto nll = token_nll(lp, labels);
  const auto ent = token_entropy(lp);
  CombinedLoss out;
  out.mask = select_mask_by_quantile(nll, q, options.scope, options.groups);

  Tensor w({rows, vocab}, 0.0);
  for (std::size_t t = 0; t < rows; ++t) {
    if (out.mask.flags[t]) {
      w.at(t, labels[t]) = 1.0;
    } else {
      copy_teacher_row(w, t, ref_dists[t]);
    }
    TokenLossRecord rec;
    rec.token_id = labels[t];
    rec.position = options.positions.empty() ? t : options.positions[t];
    rec.nll = nll[t];
    rec.entropy = ent[t];
    rec.masked = out.mask.flags[t] != 0;
    out.records.push_back(rec);
  }
  out.loss = scale(weighted_sum(student_log_probs, w), -1.0 / static_cast<double>(rows));
  return out;
}

}  // namespace uncurl
