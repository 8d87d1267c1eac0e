// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uncurl/autograd.hpp"
#include "uncurl/forward_mode.hpp"
#include "uncurl/rng.hpp"
#include "uncurl/tensor.hpp"

namespace uncurl {

using TokenId = std::size_t;

/// Byte-level vocabulary: reserved pad / begin / end-of-response symbols
/// followed by the distinct bytes of the corpus in ascending order.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBegin = 1;
  static constexpr TokenId kEndOfResponse = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary() = default;
  explicit Vocabulary(std::string symbols);
  static Vocabulary from_texts(std::span<const std::string> texts);

  std::size_t size() const noexcept { return kReserved + symbols_.size(); }
  const std::string& symbols() const noexcept { return symbols_; }

  TokenId id(char c) const;
  std::vector<TokenId> encode(std::string_view text) const;
  /// Printable text of a token: reserved names in angle brackets, bytes
  /// outside printable ASCII as \xNN.
  std::string text(TokenId id) const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::string symbols_;
  std::array<int, 256> index_{};
  void build_index();
};

struct LmConfig {
  std::size_t vocab_size = 0;
  std::size_t context = 8;
  std::size_t embed = 12;
  std::size_t hidden1 = 96;
  std::size_t hidden2 = 96;
};

/// Fixed-window MLP language model: embed the previous `context` tokens,
/// concatenate, two ReLU layers with dropout, project to vocabulary logits.
/// The prediction for position t reads only tokens t-context .. t-1.
class TinyCausalLM {
 public:
  using Input = std::vector<TokenId>;  // one sequence; sites are positions 1..T-1

  TinyCausalLM(const LmConfig& config, RngStream init_rng);

  const LmConfig& config() const noexcept { return config_; }

  /// Log-probabilities [S, V] for S flattened windows of `context` ids each.
  Var log_probs(std::span<const std::size_t> windows, const ForwardMode& mode) const;
  Tensor predict_probs(const Input& sequence, const ForwardMode& mode) const;
  std::size_t dropout_site_count() const noexcept { return 2; }

  /// embedding, w1, b1, w2, b2, w_out, b_out.
  std::vector<Var> parameters() const;
  static std::vector<std::string> parameter_names();
  void load_parameters(const std::vector<Tensor>& values);

 private:
  LmConfig config_;
  Var embedding_, w1_, b1_, w2_, b2_, w_out_, b_out_;
};

/// Context windows for targets at positions 1..T-1, left-padded with kPad;
/// row r predicts sequence[r + 1].
std::vector<std::size_t> context_windows(std::span<const TokenId> sequence, std::size_t context);

struct TokenLogProbs {
  Var log_probs;                 // [T-1, V]; row r is position r + 1
  std::vector<TokenId> targets;  // sequence[1..T-1]
  std::vector<double> nll;       // -log p(target)
};

/// Per-position log-probability vectors and realized-token NLL.
TokenLogProbs lm_token_log_probs(const TinyCausalLM& model, std::span<const TokenId> sequence,
                                 const ForwardMode& mode);

}  // namespace uncurl
