// SPDX-License-Identifier: Apache-2.0
#include "uncurl/experiments/data.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include "uncurl/io.hpp"

namespace uncurl::experiments {

namespace {

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint32_t u32_header() {
    if (pos_ + 4 > bytes_.size()) fail("truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_++]);
    return v;
  }

  void expect_payload(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      fail("truncated payload: need " + std::to_string(n) + " bytes, have " + std::to_string(bytes_.size() - pos_));
    }
  }

  unsigned char byte_at(std::size_t i) const { return static_cast<unsigned char>(bytes_[pos_ + i]); }
  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(origin_ + ": " + what + " at offset " + std::to_string(pos_));
  }

  void check_magic(std::uint32_t expected) {
    const std::size_t at = pos_;
    const std::uint32_t magic = u32_header();
    if (magic != expected) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "bad magic 0x%08x at offset %zu (expected 0x%08x)", magic, at, expected);
      throw std::runtime_error(origin_ + ": " + buf);
    }
  }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

}  // namespace

IdxImages parse_idx_images(const std::string& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  r.check_magic(kIdxImageMagic);
  IdxImages out;
  out.count = r.u32_header();
  out.rows = r.u32_header();
  out.cols = r.u32_header();
  const std::size_t width = out.rows * out.cols;
  r.expect_payload(out.count * width);
  std::vector<double> pixels(out.count * width);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = r.byte_at(i) / 255.0;
  out.pixels = Tensor({out.count, width}, std::move(pixels));
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(const std::string& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  r.check_magic(kIdxLabelMagic);
  const std::size_t count = r.u32_header();
  r.expect_payload(count);
  std::vector<std::uint8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = r.byte_at(i);
  return out;
}

IdxImages load_idx_images(const std::filesystem::path& path) { return parse_idx_images(read_file(path), path.string()); }

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(read_file(path), path.string());
}

std::string encode_idx_images(const IdxImages& images) {
  std::string out;
  put_u32(out, kIdxImageMagic);
  put_u32(out, static_cast<std::uint32_t>(images.count));
  put_u32(out, static_cast<std::uint32_t>(images.rows));
  put_u32(out, static_cast<std::uint32_t>(images.cols));
  for (double p : images.pixels.data()) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("pixel outside [0, 1]");
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0))));
  }
  return out;
}

std::string encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::string out;
  put_u32(out, kIdxLabelMagic);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  for (std::uint8_t l : labels) out.push_back(static_cast<char>(l));
  return out;
}

ClassificationData gaussian_blobs(std::size_t n_train, std::size_t n_test, std::size_t width, std::size_t classes,
                                  double spread, RngStream rng) {
  RngStream mean_rng = rng.fork(0);
  Tensor means({classes, width});
  for (double& v : means.data()) v = mean_rng.normal();
  auto sample = [&](std::size_t n, RngStream r) {
    LabeledSet set;
    set.classes = classes;
    set.inputs = Tensor({n, width});
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = r.uniform_index(classes);
      set.labels.push_back(c);
      for (std::size_t j = 0; j < width; ++j) set.inputs.at(i, j) = means.at(c, j) + spread * r.normal();
    }
    return set;
  };
  return {sample(n_train, rng.fork(1)), sample(n_test, rng.fork(2))};
}

ClassificationData load_idx_dataset(const std::filesystem::path& dir) {
  auto load = [&](const char* images, const char* labels) {
    const IdxImages img = load_idx_images(dir / images);
    const auto lab = load_idx_labels(dir / labels);
    if (lab.size() != img.count) {
      throw std::runtime_error((dir / labels).string() + ": " + std::to_string(lab.size()) + " labels for " +
                               std::to_string(img.count) + " images");
    }
    LabeledSet set;
    set.inputs = img.pixels;
    set.labels.assign(lab.begin(), lab.end());
    set.classes = 10;
    for (std::size_t l : set.labels) {
      if (l >= set.classes) throw std::runtime_error((dir / labels).string() + ": label " + std::to_string(l) + " >= 10");
    }
    return set;
  };
  return {load("train-images-idx3-ubyte", "train-labels-idx1-ubyte"), load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")};
}

std::vector<TextPair> bundled_corpus(std::size_t records, RngStream rng) {
  static constexpr std::array<std::pair<const char*, const char*>, 8> kColors{{{"sky", "blue"},
                                                                               {"grass", "green"},
                                                                               {"snow", "white"},
                                                                               {"coal", "black"},
                                                                               {"blood", "red"},
                                                                               {"sun", "yellow"},
                                                                               {"plum", "purple"},
                                                                               {"carrot", "orange"}}};
  static constexpr std::array<std::pair<const char*, const char*>, 8> kOpposites{{{"hot", "cold"},
                                                                                  {"up", "down"},
                                                                                  {"big", "small"},
                                                                                  {"fast", "slow"},
                                                                                  {"open", "shut"},
                                                                                  {"wet", "dry"},
                                                                                  {"old", "new"},
                                                                                  {"day", "night"}}};
  static constexpr std::array<std::pair<const char*, const char*>, 6> kSounds{
      {{"cow", "moo"}, {"dog", "woof"}, {"cat", "meow"}, {"duck", "quack"}, {"owl", "hoot"}, {"sheep", "baa"}}};
  std::vector<TextPair> out;
  out.reserve(records);
  for (std::size_t i = 0; i < records; ++i) {
    switch (rng.uniform_index(5)) {
      case 0:
      case 1: {
        const auto a = rng.uniform_index(50), b = rng.uniform_index(50);
        out.push_back({std::to_string(a) + "+" + std::to_string(b) + "=", std::to_string(a + b)});
        break;
      }
      case 2: {
        const auto& [thing, color] = kColors[rng.uniform_index(kColors.size())];
        out.push_back({std::string("color of ") + thing + "?", color});
        break;
      }
      case 3: {
        const auto& [word, opposite] = kOpposites[rng.uniform_index(kOpposites.size())];
        out.push_back({std::string("opposite of ") + word + "?", opposite});
        break;
      }
      default: {
        const auto& [animal, sound] = kSounds[rng.uniform_index(kSounds.size())];
        out.push_back({std::string("what does a ") + animal + " say?", sound});
        break;
      }
    }
  }
  return out;
}

std::vector<TextPair> parse_corpus(const std::string& text, const std::string& origin) {
  std::vector<TextPair> out;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": expected prompt<TAB>response");
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

std::vector<TextPair> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path), path.string());
}

}  // namespace uncurl::experiments
