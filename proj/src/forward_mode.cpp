// SPDX-License-Identifier: Apache-2.0
#include "uncurl/forward_mode.hpp"

#include <stdexcept>

#include "uncurl/sgd.hpp"

namespace uncurl {

ForwardMode ForwardMode::train(RngStream& rng, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  return ForwardMode(&rng, rate);
}

Var ForwardMode::apply_dropout(const Var& x) const {
  if (!training()) return x;
  return mul_mask(x, dropout_mask(x.shape(), rate_, *rng_));
}

}  // namespace uncurl
