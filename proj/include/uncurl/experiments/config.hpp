// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace uncurl::experiments {

// Every experiment config is a plain struct with a JSON schema: to_json writes
// every field, from_json accepts any subset of fields (missing ones keep their
// defaults) and rejects unknown keys and mistyped values with
// std::invalid_argument naming the key. A run is a pure function of its config.

inline constexpr const char* kArtifactVersion = "1.0.0";

struct LinearSubsetConfig {
  std::uint64_t seed = 0;
  std::size_t n = 10;  // training rows
  std::size_t d = 6;   // parameters
  std::size_t k = 3;   // rows per step
  double lambda = 0.02;
  std::size_t steps = 50;
  double noise = 0.1;              // observation noise std on training and held-out rows
  std::size_t holdout = 100;       // held-out rows
  std::string instance = "gaussian";  // "gaussian" | "orthonormal" (requires n <= d)
  std::string mode = "independent";   // "independent" | "shared"
  // Names of SelectionKind plus "full_compute_matched" (full batch, step lambda * k / n).
  std::vector<std::string> policies{"full", "full_compute_matched", "topk_residual", "exhaustive_oracle", "random"};
  std::string advance_policy = "exhaustive_oracle";  // shared mode: whose step the state follows
  std::uint64_t exhaustive_cap = 1'000'000;
  std::string out;

  void validate() const;
};

struct AleaEpisConfig {
  std::uint64_t seed = 0;
  std::size_t trials = 30;
  std::size_t degree = 5;
  std::size_t n_train = 20;
  std::size_t n_validation = 100;
  double aleatoric_scale = 0.1;       // datum noise std = scale * Unif(0, 1)
  double epistemic_sigma = 0.002;     // coefficient perturbation std
  std::size_t epistemic_samples = 1000;
  double learning_rate = 0.01;
  std::vector<double> stage_sigmas{1e-3, 3.1622776601683794e-3, 1e-2, 3.1622776601683794e-2,
                                   1e-1, 3.1622776601683794e-1, 1.0};
  std::string out;

  void validate() const;
};

struct QuantileClsConfig {
  std::uint64_t seed = 0;
  std::string dataset = "synthetic";  // "synthetic" | "idx"
  std::string idx_dir;                // holds {train,t10k}-{images,labels}-idx{3,1}-ubyte
  std::size_t synthetic_train = 60000;  // MNIST-sized, so an epoch is the same number of steps
  std::size_t synthetic_test = 10000;
  std::size_t synthetic_width = 20;
  std::size_t classes = 10;
  double synthetic_spread = 1.0;  // within-class std relative to unit class-mean scale
  std::size_t epochs = 20;
  double learning_rate = 0.01;
  std::size_t batch_size = 256;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  std::size_t band_count = 10;
  std::vector<std::size_t> bands;  // band indices to run; empty means all
  double train_dropout = 0.0;
  std::string out;

  void validate() const;
};

struct TokenCurriculumConfig {
  std::uint64_t seed = 0;
  std::string corpus;  // tab-separated prompt/response file; empty selects the bundled corpus
  std::size_t corpus_records = 600;
  std::size_t heldout_records = 100;
  std::size_t probe_records = 12;
  std::size_t context = 8;
  std::size_t embed = 12;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 64;
  std::size_t epochs = 12;
  std::size_t batch_sequences = 16;
  double learning_rate = 0.1;
  std::string schedule = "cosine";  // "constant" | "cosine"
  double train_dropout = 0.1;
  double quantile = 0.25;
  std::string scope = "per_batch";
  std::vector<std::string> objectives{"mle", "masked_mle", "combined"};
  std::size_t trace_every = 4;  // epochs between token traces; the last epoch is always traced
  std::size_t n_samples = 100;
  double dropout_rate = 0.1;
  std::string out;

  void validate() const;
};

struct ProbeConfig {
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string corpus;  // empty selects a bundled probe set
  std::size_t probe_records = 12;
  std::size_t n_samples = 100;
  double dropout_rate = 0.1;
  double quantile = 0.25;
  std::string out;

  void validate() const;
};

void to_json(nlohmann::json& j, const LinearSubsetConfig& c);
void from_json(const nlohmann::json& j, LinearSubsetConfig& c);
void to_json(nlohmann::json& j, const AleaEpisConfig& c);
void from_json(const nlohmann::json& j, AleaEpisConfig& c);
void to_json(nlohmann::json& j, const QuantileClsConfig& c);
void from_json(const nlohmann::json& j, QuantileClsConfig& c);
void to_json(nlohmann::json& j, const TokenCurriculumConfig& c);
void from_json(const nlohmann::json& j, TokenCurriculumConfig& c);
void to_json(nlohmann::json& j, const ProbeConfig& c);
void from_json(const nlohmann::json& j, ProbeConfig& c);

/// 64-bit FNV-1a of the canonical (key-sorted) JSON of `config` without its
/// "out" entry, as 16 lowercase hex digits. The output root never changes a run.
std::string config_hash(const nlohmann::json& config);

}  // namespace uncurl::experiments
