// SPDX-License-Identifier: Apache-2.0
#include "uncurl/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uncurl {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t RngStream::next_u64() noexcept {
  const std::uint64_t value = mix64(mix64(seed_) + (counter_ + 1) * kGolden);
  ++counter_;
  return value;
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

RngStream RngStream::fork(std::uint64_t stream_id) const noexcept {
  return RngStream(mix64(seed_ ^ mix64(stream_id + kGolden)), 0);
}

}  // namespace uncurl
