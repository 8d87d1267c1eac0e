// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "uncurl/experiments/runners.hpp"
#include "uncurl/objectives.hpp"
#include "uncurl/sgd.hpp"

namespace uncurl::experiments {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kDropoutStream = 3;
constexpr std::uint64_t kDataStream = 7;

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> rows) {
  const std::size_t width = source.dim(1);
  Tensor out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = source.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

std::string band_name(std::size_t band, std::size_t count) {
  return "band_" + std::to_string(band * 100 / count) + "_" + std::to_string((band + 1) * 100 / count);
}

}  // namespace

std::vector<std::uint8_t> band_mask(std::span<const double> losses, std::size_t band, std::size_t band_count) {
  if (band_count == 0 || band >= band_count) throw std::invalid_argument("band index out of range");
  const std::size_t n = losses.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  const std::size_t lo = band * n / band_count, hi = (band + 1) * n / band_count;
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t r = lo; r < hi; ++r) mask[order[r]] = 1;
  return mask;
}

double accuracy(const MlpClassifier& model, const LabeledSet& set) {
  constexpr std::size_t kChunk = 1024;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < set.size(); start += kChunk) {
    rows.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + kChunk); ++i) rows.push_back(i);
    const Tensor logits = model.forward(gather_rows(set.inputs, rows), ForwardMode::eval()).value();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = logits.row(r);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == set.labels[rows[r]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

BandRun train_band(const ClassificationData& data, const QuantileClsConfig& c, std::size_t band, std::size_t band_count) {
  const RngStream root(c.seed);
  const MlpConfig mlp{data.train.inputs.dim(1), c.hidden1, c.hidden2, data.train.classes};
  BandRun run{MlpClassifier(mlp, root.fork(kInitStream)), {}, {}};
  std::vector<Var> params = run.model.parameters();
  const SgdConfig sgd{c.learning_rate, LrSchedule::kConstant, 0};
  std::size_t step = 0;
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle = root.fork(kShuffleStream).fork(epoch);
    shuffle.shuffle(order);
    double loss_total = 0.0;
    std::size_t loss_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += c.batch_size) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(c.batch_size, order.size() - start));
      std::vector<std::size_t> labels;
      for (std::size_t r : rows) labels.push_back(data.train.labels[r]);
      RngStream dropout = root.fork(kDropoutStream).at(step * kEnsembleStride);
      const ForwardMode mode = c.train_dropout > 0.0 ? ForwardMode::train(dropout, c.train_dropout) : ForwardMode::eval();
      const Var lp = log_softmax_rows(run.model.forward(gather_rows(data.train.inputs, rows), mode));
      const auto mask = band_mask(token_nll(lp.value(), labels), band, band_count);
      ++step;
      if (std::find(mask.begin(), mask.end(), std::uint8_t{1}) == mask.end()) continue;
      const Var loss = weighted_loss(lp, MaskedMleDelta{labels, mask});
      backward(loss);
      sgd_step(params, sgd, step);
      zero_grad(params);
      loss_total += loss.value().item();
      ++loss_batches;
    }
    run.train_loss.push_back(loss_batches ? loss_total / static_cast<double>(loss_batches) : std::nan(""));
    run.test_accuracy.push_back(accuracy(run.model, data.test));
  }
  return run;
}

ClassificationData load_classification_data(const QuantileClsConfig& c) {
  c.validate();
  if (c.dataset == "idx") return load_idx_dataset(c.idx_dir);
  return gaussian_blobs(c.synthetic_train, c.synthetic_test, c.synthetic_width, c.classes, c.synthetic_spread,
                        RngStream(c.seed).fork(kDataStream));
}

RunResult run_quantile_classification(const QuantileClsConfig& c) {
  c.validate();
  const ClassificationData data = load_classification_data(c);
  RunResult result;
  result.experiment = "quantile-cls";
  result.config = c;
  result.config_hash = config_hash(result.config);
  result.seed = c.seed;
  result.columns = {"train_loss", "test_accuracy", "band"};

  std::vector<std::size_t> bands = c.bands;
  if (bands.empty()) {
    bands.resize(c.band_count);
    std::iota(bands.begin(), bands.end(), 0);
  }
  struct Entry {
    std::string name;
    double band;
    BandRun run;
  };
  std::vector<Entry> runs;
  runs.push_back({band_name(0, 1), -1.0, train_band(data, c, 0, 1)});
  for (std::size_t b : bands) runs.push_back({band_name(b, c.band_count), static_cast<double>(b), train_band(data, c, b, c.band_count)});

  const MlpConfig mlp{data.train.inputs.dim(1), c.hidden1, c.hidden2, data.train.classes};
  const double initial = accuracy(MlpClassifier(mlp, RngStream(c.seed).fork(kInitStream)), data.test);
  for (const auto& e : runs) result.add_row(0, e.name, {std::nan(""), initial, e.band});
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    for (const auto& e : runs) {
      result.add_row(epoch + 1, e.name, {e.run.train_loss[epoch], e.run.test_accuracy[epoch], e.band});
    }
  }

  std::vector<double> ranks, finals;
  nlohmann::json final_accuracy = nlohmann::json::object();
  for (const auto& e : runs) {
    final_accuracy[e.name] = e.run.test_accuracy.back();
    if (e.band >= 0.0) {
      ranks.push_back(e.band);
      finals.push_back(e.run.test_accuracy.back());
    }
  }
  double rho = std::nan("");
  if (ranks.size() >= 2) {
    try {
      rho = spearman(ranks, finals);
    } catch (const std::domain_error&) {
      // identical accuracies in every band leave rho undefined
    }
  }
  result.summary = {{"final_accuracy", final_accuracy},
                    {"chance_accuracy", 1.0 / static_cast<double>(data.train.classes)},
                    {"spearman_band_accuracy", std::isnan(rho) ? nlohmann::json(nullptr) : nlohmann::json(rho)},
                    {"train_size", data.train.size()},
                    {"test_size", data.test.size()}};
  return result;
}

std::vector<double> bald_by_dropout_rate(const MlpClassifier& model, const Tensor& inputs,
                                         std::span<const double> rates, std::size_t n_samples, const RngStream& rng) {
  std::vector<double> out;
  for (double rate : rates) {
    const auto sites = mc_decompose(model, inputs, EnsembleConfig{n_samples, rate}, rng);
    double total = 0.0;
    for (const auto& u : sites) total += u.epistemic;
    out.push_back(total / static_cast<double>(sites.size()));
  }
  return out;
}

}  // namespace uncurl::experiments
