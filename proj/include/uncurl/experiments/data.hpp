// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uncurl/rng.hpp"
#include "uncurl/tensor.hpp"

namespace uncurl::experiments {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Unsigned-byte images [count, rows * cols], pixels scaled to [0, 1].
struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Tensor pixels;
};

/// Big-endian IDX parsing. Errors (std::runtime_error) name the path and, for
/// malformed content, the byte offset: "truncated header", "bad magic",
/// "truncated payload".
IdxImages parse_idx_images(const std::string& bytes, const std::string& origin = "<memory>");
std::vector<std::uint8_t> parse_idx_labels(const std::string& bytes, const std::string& origin = "<memory>");
IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

/// Inverse of parse_idx_images for pixels that are multiples of 1/255.
std::string encode_idx_images(const IdxImages& images);
std::string encode_idx_labels(std::span<const std::uint8_t> labels);

struct LabeledSet {
  Tensor inputs;                    // [count, width]
  std::vector<std::size_t> labels;  // in [0, classes)
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
};

struct ClassificationData {
  LabeledSet train;
  LabeledSet test;
};

/// Isotropic Gaussian blobs: class means drawn once from N(0, I) in `width`
/// dimensions, samples mean + spread * N(0, I). Train and test share the means.
ClassificationData gaussian_blobs(std::size_t n_train, std::size_t n_test, std::size_t width, std::size_t classes,
                                  double spread, RngStream rng);

/// MNIST-layout IDX files in `dir`: train-images-idx3-ubyte, train-labels-idx1-ubyte,
/// t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte. Missing files raise an error naming the path.
ClassificationData load_idx_dataset(const std::filesystem::path& dir);

struct TextPair {
  std::string prompt;
  std::string response;
};

/// Bundled synthetic corpus: arithmetic facts ("17+5=" -> "22") interleaved
/// with template questions ("color of grass?" -> "green"). Deterministic in `rng`.
std::vector<TextPair> bundled_corpus(std::size_t records, RngStream rng);

/// One record per non-empty line, prompt and response separated by the first tab.
std::vector<TextPair> parse_corpus(const std::string& text, const std::string& origin = "<memory>");
std::vector<TextPair> load_corpus(const std::filesystem::path& path);

}  // namespace uncurl::experiments
