// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uncurl/models/mlp.hpp"
#include "uncurl/models/tiny_lm.hpp"

namespace uncurl {

// Checkpoints are JSON documents:
//   {"format": "uncurl-checkpoint", "version": 1, "kind": "tiny_lm" | "mlp",
//    "config": {...}, "vocabulary": "<symbols>" (tiny_lm only),
//    "tensors": [{"name": ..., "shape": [...], "data": [...]}, ...]}
// Floats are written with round-trip precision, so save/load is lossless.

inline constexpr const char* kCheckpointFormat = "uncurl-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct LmCheckpoint {
  LmConfig config;
  Vocabulary vocabulary;
  std::vector<Tensor> tensors;

  TinyCausalLM build() const;
};

struct MlpCheckpoint {
  MlpConfig config;
  std::vector<Tensor> tensors;

  MlpClassifier build() const;
};

std::string lm_checkpoint_to_string(const TinyCausalLM& model, const Vocabulary& vocab);
LmCheckpoint lm_checkpoint_from_string(const std::string& text);
void save_lm_checkpoint(const std::filesystem::path& path, const TinyCausalLM& model, const Vocabulary& vocab);
LmCheckpoint load_lm_checkpoint(const std::filesystem::path& path);

std::string mlp_checkpoint_to_string(const MlpClassifier& model);
MlpCheckpoint mlp_checkpoint_from_string(const std::string& text);
void save_mlp_checkpoint(const std::filesystem::path& path, const MlpClassifier& model);
MlpCheckpoint load_mlp_checkpoint(const std::filesystem::path& path);

}  // namespace uncurl
