// SPDX-License-Identifier: Apache-2.0
#include "uncurl/models/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "uncurl/distribution.hpp"

namespace uncurl {

Tensor he_normal(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  Tensor w({fan_in, fan_out});
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : w.data()) v = stddev * rng.normal();
  return w;
}

MlpClassifier::MlpClassifier(const MlpConfig& config, RngStream init_rng) : config_(config) {
  if (config.input_width == 0 || config.hidden1 == 0 || config.hidden2 == 0 || config.classes == 0) {
    throw std::invalid_argument("MLP layer widths must be positive");
  }
  w1_ = Var::parameter(he_normal(config.input_width, config.hidden1, init_rng));
  b1_ = Var::parameter(Tensor({config.hidden1}));
  w2_ = Var::parameter(he_normal(config.hidden1, config.hidden2, init_rng));
  b2_ = Var::parameter(Tensor({config.hidden2}));
  w3_ = Var::parameter(he_normal(config.hidden2, config.classes, init_rng));
  b3_ = Var::parameter(Tensor({config.classes}));
}

Var MlpClassifier::forward(const Tensor& batch, const ForwardMode& mode) const {
  if (batch.rank() != 2 || batch.dim(1) != config_.input_width) {
    throw std::invalid_argument("MLP input width mismatch: expected " + std::to_string(config_.input_width) +
                                ", got shape " + shape_to_string(batch.shape()));
  }
  const Var x = Var::constant(batch);
  Var h = mode.apply_dropout(relu(add_row(matmul(x, w1_), b1_)));
  h = mode.apply_dropout(relu(add_row(matmul(h, w2_), b2_)));
  return add_row(matmul(h, w3_), b3_);
}

Tensor MlpClassifier::predict_probs(const Tensor& batch, const ForwardMode& mode) const {
  return softmax_rows(forward(batch, mode).value());
}

std::vector<Var> MlpClassifier::parameters() const { return {w1_, b1_, w2_, b2_, w3_, b3_}; }

std::vector<std::string> MlpClassifier::parameter_names() { return {"w1", "b1", "w2", "b2", "w3", "b3"}; }

void MlpClassifier::load_parameters(const std::vector<Tensor>& values) {
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

}  // namespace uncurl
