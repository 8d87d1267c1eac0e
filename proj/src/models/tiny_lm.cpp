// SPDX-License-Identifier: Apache-2.0
#include "uncurl/models/tiny_lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "uncurl/distribution.hpp"
#include "uncurl/models/mlp.hpp"

namespace uncurl {

Vocabulary::Vocabulary(std::string symbols) : symbols_(std::move(symbols)) {
  std::string sorted = symbols_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("vocabulary symbols must be distinct");
  }
  build_index();
}

void Vocabulary::build_index() {
  index_.fill(-1);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    index_[static_cast<unsigned char>(symbols_[i])] = static_cast<int>(kReserved + i);
  }
}

Vocabulary Vocabulary::from_texts(std::span<const std::string> texts) {
  std::set<unsigned char> seen;
  for (const auto& t : texts)
    for (char c : t) seen.insert(static_cast<unsigned char>(c));
  std::string symbols;
  for (unsigned char c : seen) symbols.push_back(static_cast<char>(c));
  return Vocabulary(std::move(symbols));
}

TokenId Vocabulary::id(char c) const {
  const int idx = index_[static_cast<unsigned char>(c)];
  if (idx < 0) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "\\x%02x", static_cast<unsigned char>(c));
    throw std::invalid_argument(std::string("character ") + buf + " is not in the vocabulary");
  }
  return static_cast<TokenId>(idx);
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(id(c));
  return out;
}

std::string Vocabulary::text(TokenId id) const {
  switch (id) {
    case kPad: return "<pad>";
    case kBegin: return "<begin>";
    case kEndOfResponse: return "<end_of_response>";
    default: break;
  }
  if (id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  const auto c = static_cast<unsigned char>(symbols_[id - kReserved]);
  if (c >= 0x20 && c < 0x7f) return std::string(1, static_cast<char>(c));
  char buf[8];
  std::snprintf(buf, sizeof buf, "\\x%02x", c);
  return buf;
}

TinyCausalLM::TinyCausalLM(const LmConfig& config, RngStream init_rng) : config_(config) {
  if (config.vocab_size == 0 || config.context == 0 || config.embed == 0 || config.hidden1 == 0 ||
      config.hidden2 == 0) {
    throw std::invalid_argument("language model dimensions must be positive");
  }
  Tensor table({config.vocab_size, config.embed});
  for (double& v : table.data()) v = init_rng.normal();
  embedding_ = Var::parameter(std::move(table));
  w1_ = Var::parameter(he_normal(config.context * config.embed, config.hidden1, init_rng));
  b1_ = Var::parameter(Tensor({config.hidden1}));
  w2_ = Var::parameter(he_normal(config.hidden1, config.hidden2, init_rng));
  b2_ = Var::parameter(Tensor({config.hidden2}));
  w_out_ = Var::parameter(he_normal(config.hidden2, config.vocab_size, init_rng));
  b_out_ = Var::parameter(Tensor({config.vocab_size}));
}

Var TinyCausalLM::log_probs(std::span<const std::size_t> windows, const ForwardMode& mode) const {
  if (windows.empty() || windows.size() % config_.context != 0) {
    throw std::invalid_argument("window buffer must hold whole windows of " + std::to_string(config_.context));
  }
  for (std::size_t id : windows) {
    if (id >= config_.vocab_size) {
      throw std::invalid_argument("token id " + std::to_string(id) + " >= vocabulary size " +
                                  std::to_string(config_.vocab_size));
    }
  }
  const Var x = embedding(embedding_, windows, config_.context);
  Var h = mode.apply_dropout(relu(add_row(matmul(x, w1_), b1_)));
  h = mode.apply_dropout(relu(add_row(matmul(h, w2_), b2_)));
  return log_softmax_rows(add_row(matmul(h, w_out_), b_out_));
}

Tensor TinyCausalLM::predict_probs(const Input& sequence, const ForwardMode& mode) const {
  Tensor lp = lm_token_log_probs(*this, sequence, mode).log_probs.value();
  for (double& v : lp.data()) v = std::exp(v);
  return lp;
}

std::vector<Var> TinyCausalLM::parameters() const { return {embedding_, w1_, b1_, w2_, b2_, w_out_, b_out_}; }

std::vector<std::string> TinyCausalLM::parameter_names() {
  return {"embedding", "w1", "b1", "w2", "b2", "w_out", "b_out"};
}

void TinyCausalLM::load_parameters(const std::vector<Tensor>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw std::invalid_argument("wrong number of parameter tensors");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].shape() != params[i].shape()) {
      throw std::invalid_argument("parameter '" + parameter_names()[i] + "' has shape " +
                                  shape_to_string(values[i].shape()) + ", expected " +
                                  shape_to_string(params[i].shape()));
    }
    params[i].mutable_value() = values[i];
  }
}

std::vector<std::size_t> context_windows(std::span<const TokenId> sequence, std::size_t context) {
  if (sequence.size() < 2) throw std::invalid_argument("sequence needs at least two tokens");
  std::vector<std::size_t> windows;
  windows.reserve((sequence.size() - 1) * context);
  for (std::size_t t = 1; t < sequence.size(); ++t) {
    for (std::size_t k = context; k > 0; --k) {
      windows.push_back(t >= k ? sequence[t - k] : Vocabulary::kPad);
    }
  }
  return windows;
}

TokenLogProbs lm_token_log_probs(const TinyCausalLM& model, std::span<const TokenId> sequence,
                                 const ForwardMode& mode) {
  for (TokenId id : sequence) {
    if (id >= model.config().vocab_size) {
      throw std::invalid_argument("token id " + std::to_string(id) + " >= vocabulary size " +
                                  std::to_string(model.config().vocab_size));
    }
  }
  const auto windows = context_windows(sequence, model.config().context);
  TokenLogProbs out;
  out.log_probs = model.log_probs(windows, mode);
  out.targets.assign(sequence.begin() + 1, sequence.end());
  out.nll.resize(out.targets.size());
  for (std::size_t r = 0; r < out.targets.size(); ++r) out.nll[r] = -out.log_probs.value().at(r, out.targets[r]);
  return out;
}

}  // namespace uncurl
