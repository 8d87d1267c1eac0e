// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uncurl/experiments/config.hpp"
#include "uncurl/experiments/data.hpp"
#include "uncurl/experiments/results.hpp"
#include "uncurl/models/linear.hpp"
#include "uncurl/models/mlp.hpp"
#include "uncurl/models/tiny_lm.hpp"
#include "uncurl/uncertainty.hpp"

namespace uncurl::experiments {

// ---- linear subset selection ------------------------------------------------

struct LinearInstance {
  LinearSystem system;  // w starts at zero
  Tensor holdout_z;
  Tensor holdout_d;
};

/// Random system d = Z w* + noise with held-out rows drawn the same way.
/// Gaussian rows have N(0, 1) entries; orthonormal rows satisfy Z Z^T = I and
/// held-out rows are scaled to the same per-row norm.
LinearInstance make_linear_instance(const LinearSubsetConfig& config);

/// Columns: train_loss, eval_loss. Step 0 holds the shared initial state.
/// Independent mode: each policy follows its own trajectory. Shared mode: every
/// policy is scored from the same state each step (train_loss is its post-step
/// loss) and the state then advances along `advance_policy`.
RunResult run_linear_subset(const LinearSubsetConfig& config);

// ---- aleatoric / epistemic stages -------------------------------------------

/// One row per stage sigma (step = grid index, policy "stage"). Columns:
/// sigma, rho_epistemic, rho_aleatoric, valid_epistemic, valid_aleatoric.
/// Trials whose Spearman inputs are degenerate are flagged in the summary and
/// left out of the averages; a stage with no valid trial reports NaN.
RunResult run_alea_epis(const AleaEpisConfig& config);

// ---- loss-quantile classification -------------------------------------------

/// Rows whose in-batch loss rank falls in [band/count, (band+1)/count) of the
/// batch, ranked ascending by loss with ties to the lower index.
std::vector<std::uint8_t> band_mask(std::span<const double> losses, std::size_t band, std::size_t band_count);

double accuracy(const MlpClassifier& model, const LabeledSet& set);

struct BandRun {
  MlpClassifier model;
  std::vector<double> train_loss;     // mean selected-row loss per epoch
  std::vector<double> test_accuracy;  // after each epoch
};

/// Trains on rows in `band` of every batch; `band_count` 1 trains on everything.
BandRun train_band(const ClassificationData& data, const QuantileClsConfig& config, std::size_t band,
                   std::size_t band_count);

ClassificationData load_classification_data(const QuantileClsConfig& config);

/// Rows per (epoch, band): columns train_loss, test_accuracy, band. Policy
/// names are "band_<lo>_<hi>" in percent. The summary holds the final
/// accuracies and their Spearman correlation with band rank.
RunResult run_quantile_classification(const QuantileClsConfig& config);

/// Mean BALD epistemic uncertainty over `inputs` at each dropout rate.
std::vector<double> bald_by_dropout_rate(const MlpClassifier& model, const Tensor& inputs,
                                         std::span<const double> rates, std::size_t n_samples, const RngStream& rng);

// ---- token curriculum ---------------------------------------------------------

/// [begin] prompt TAB response [end_of_response]. Targets at positions
/// >= first_target (the response and its terminator) are eligible for loss.
struct EncodedRecord {
  std::vector<TokenId> tokens;
  std::size_t first_target = 0;
};

Vocabulary corpus_vocabulary(std::span<const TextPair> records);
EncodedRecord encode_record(const Vocabulary& vocab, const TextPair& record);

/// Eligible-position windows and targets of several records, flattened.
struct SiteBatch {
  std::vector<std::size_t> windows;  // sites * context ids
  std::vector<TokenId> targets;
  std::vector<std::size_t> sequence;  // record index per site
  std::vector<std::size_t> position;  // target position per site
};
SiteBatch eligible_sites(std::span<const EncodedRecord> records, std::size_t context);

/// Per-token eval statistics plus the MCDO decomposition on `records`; masked flags
/// from select_mask_by_quantile over the pooled NLLs.
TokenTrace token_trace(const TinyCausalLM& model, const Vocabulary& vocab, std::span<const EncodedRecord> records,
                       double quantile, const EnsembleConfig& ensemble, const RngStream& rng);

/// Mean NLL per eligible site under eval mode.
double mean_eligible_nll(const TinyCausalLM& model, std::span<const EncodedRecord> records);

/// Rows per optimizer step: columns train_loss, heldout_nll (NaN except at
/// epoch ends), selected_fraction. One policy per objective. Checkpoints of
/// every trained model are attached as artifacts.
RunResult run_token_curriculum(const TokenCurriculumConfig& config);

/// Token trace of a saved language model on a probe corpus.
RunResult run_uncertainty_probe(const ProbeConfig& config);

}  // namespace uncurl::experiments
