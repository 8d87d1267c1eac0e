// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "uncurl/autograd.hpp"
#include "uncurl/rng.hpp"

namespace uncurl {

/// Evaluation (deterministic) or training (dropout active) forward pass.
/// A training-mode pass draws its masks from the referenced stream, in site
/// order, so the pass is a pure function of (inputs, seed, counter).
class ForwardMode {
 public:
  static ForwardMode eval() noexcept { return ForwardMode(nullptr, 0.0); }
  static ForwardMode train(RngStream& rng, double rate);

  bool training() const noexcept { return rng_ != nullptr; }
  double rate() const noexcept { return rate_; }

  /// Identity in eval mode; inverted-dropout mask multiply in train mode.
  Var apply_dropout(const Var& x) const;

 private:
  ForwardMode(RngStream* rng, double rate) noexcept : rng_(rng), rate_(rate) {}
  RngStream* rng_;
  double rate_;
};

}  // namespace uncurl
