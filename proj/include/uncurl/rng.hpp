// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace uncurl {

/// Counter-based random stream. Draw i of a stream is a pure function of
/// (seed, i), so any position of the sequence can be reproduced without
/// replaying the draws before it. Integer arithmetic only up to the final
/// conversion to double, which makes the streams identical across platforms.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() noexcept;
  /// Uniform integer in [0, n). Rejection sampling, so unbiased.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Stream positioned at `counter` with the same seed.
  RngStream at(std::uint64_t counter) const noexcept { return RngStream(seed_, counter); }
  /// Statistically independent stream keyed by `stream_id`.
  RngStream fork(std::uint64_t stream_id) const noexcept;

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

}  // namespace uncurl
