// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "uncurl/autograd.hpp"
#include "uncurl/forward_mode.hpp"
#include "uncurl/rng.hpp"
#include "uncurl/tensor.hpp"

namespace uncurl {

struct MlpConfig {
  std::size_t input_width = 784;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  std::size_t classes = 10;
};

/// input -> 32 -> 16 -> classes, ReLU, dropout after each hidden activation.
class MlpClassifier {
 public:
  using Input = Tensor;  // [batch, input_width]

  MlpClassifier(const MlpConfig& config, RngStream init_rng);

  const MlpConfig& config() const noexcept { return config_; }

  /// Logits [batch, classes].
  Var forward(const Tensor& batch, const ForwardMode& mode) const;
  Tensor predict_probs(const Tensor& batch, const ForwardMode& mode) const;
  std::size_t dropout_site_count() const noexcept { return 2; }

  /// Handles sharing this model's parameter nodes (w1, b1, w2, b2, w3, b3).
  std::vector<Var> parameters() const;
  static std::vector<std::string> parameter_names();
  void load_parameters(const std::vector<Tensor>& values);

 private:
  MlpConfig config_;
  Var w1_, b1_, w2_, b2_, w3_, b3_;
};

/// He-normal weight matrix [fan_in, fan_out].
Tensor he_normal(std::size_t fan_in, std::size_t fan_out, RngStream& rng);

}  // namespace uncurl
