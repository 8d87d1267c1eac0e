// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "uncurl/experiments/runners.hpp"
#include "uncurl/io.hpp"
#include "uncurl/models/checkpoint.hpp"
#include "uncurl/objectives.hpp"
#include "uncurl/sgd.hpp"

namespace uncurl::experiments {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kOrderStream = 2;
constexpr std::uint64_t kDropoutStream = 3;
constexpr std::uint64_t kTraceStream = 4;
constexpr std::uint64_t kCorpusStream = 5;
constexpr std::uint64_t kProbeCorpusStream = 6;

double guarded_pearson(std::span<const double> a, std::span<const double> b) {
  try {
    return pearson(a, b);
  } catch (const std::domain_error&) {
    return std::nan("");
  }
}

nlohmann::json nullable(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

/// Pearson correlations of the uncertainty columns against NLL and entropy.
nlohmann::json trace_correlations(const TokenTrace& trace) {
  std::vector<double> nll, entropy, aleatoric, epistemic;
  for (const auto& r : trace.records) {
    nll.push_back(r.nll);
    entropy.push_back(r.entropy);
    aleatoric.push_back(r.aleatoric);
    epistemic.push_back(r.epistemic);
  }
  return {{"epistemic_vs_nll", nullable(guarded_pearson(epistemic, nll))},
          {"epistemic_vs_entropy", nullable(guarded_pearson(epistemic, entropy))},
          {"aleatoric_vs_nll", nullable(guarded_pearson(aleatoric, nll))},
          {"aleatoric_vs_entropy", nullable(guarded_pearson(aleatoric, entropy))}};
}

struct Curve {
  std::vector<double> train_loss;          // per optimizer step
  std::vector<double> selected_fraction;   // per optimizer step
  std::vector<double> heldout_nll;         // index 0 is the initial model, then per epoch
  std::vector<std::size_t> epoch_end_step;  // last step of each epoch
};

}  // namespace

Vocabulary corpus_vocabulary(std::span<const TextPair> records) {
  std::vector<std::string> texts{"\t"};
  for (const auto& r : records) {
    texts.push_back(r.prompt);
    texts.push_back(r.response);
  }
  return Vocabulary::from_texts(texts);
}

EncodedRecord encode_record(const Vocabulary& vocab, const TextPair& record) {
  EncodedRecord out;
  out.tokens.push_back(Vocabulary::kBegin);
  for (TokenId t : vocab.encode(record.prompt)) out.tokens.push_back(t);
  out.tokens.push_back(vocab.id('\t'));
  out.first_target = out.tokens.size();
  for (TokenId t : vocab.encode(record.response)) out.tokens.push_back(t);
  out.tokens.push_back(Vocabulary::kEndOfResponse);
  return out;
}

SiteBatch eligible_sites(std::span<const EncodedRecord> records, std::size_t context) {
  SiteBatch batch;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    const auto windows = context_windows(rec.tokens, context);
    for (std::size_t p = rec.first_target; p < rec.tokens.size(); ++p) {
      const auto* w = windows.data() + (p - 1) * context;
      batch.windows.insert(batch.windows.end(), w, w + context);
      batch.targets.push_back(rec.tokens[p]);
      batch.sequence.push_back(r);
      batch.position.push_back(p);
    }
  }
  return batch;
}

double mean_eligible_nll(const TinyCausalLM& model, std::span<const EncodedRecord> records) {
  const SiteBatch sites = eligible_sites(records, model.config().context);
  const auto nll = token_nll(model.log_probs(sites.windows, ForwardMode::eval()).value(), sites.targets);
  return std::accumulate(nll.begin(), nll.end(), 0.0) / static_cast<double>(nll.size());
}

TokenTrace token_trace(const TinyCausalLM& model, const Vocabulary& vocab, std::span<const EncodedRecord> records,
                       double quantile, const EnsembleConfig& ensemble, const RngStream& rng) {
  const SiteBatch sites = eligible_sites(records, model.config().context);
  const Tensor lp = model.log_probs(sites.windows, ForwardMode::eval()).value();
  const auto nll = token_nll(lp, sites.targets);
  const auto entropy = token_entropy(lp);
  const auto mask = select_mask_by_quantile(nll, quantile);

  std::vector<std::vector<UncertaintyDecomposition>> per_record;
  for (std::size_t r = 0; r < records.size(); ++r) {
    per_record.push_back(mc_decompose(model, records[r].tokens, ensemble, rng.fork(r)));
  }

  TokenTrace trace;
  trace.quantile = quantile;
  trace.n_samples = ensemble.n_samples;
  trace.dropout_rate = ensemble.dropout_rate;
  for (std::size_t i = 0; i < sites.targets.size(); ++i) {
    const auto& u = per_record[sites.sequence[i]][sites.position[i] - 1];
    trace.records.push_back({sites.sequence[i], sites.position[i], vocab.text(sites.targets[i]), sites.targets[i], nll[i],
                             entropy[i], u.aleatoric, u.epistemic, u.total, mask.flags[i] != 0});
  }
  return trace;
}

RunResult run_token_curriculum(const TokenCurriculumConfig& c) {
  c.validate();
  const RngStream root(c.seed);

  std::vector<TextPair> train_text, heldout_text;
  if (c.corpus.empty()) {
    auto all = bundled_corpus(c.corpus_records + c.heldout_records, root.fork(kCorpusStream));
    train_text.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(c.corpus_records));
    heldout_text.assign(all.begin() + static_cast<std::ptrdiff_t>(c.corpus_records), all.end());
  } else {
    auto all = load_corpus(c.corpus);
    if (all.size() < 2) throw std::invalid_argument(c.corpus + ": need at least two records");
    const std::size_t held = std::min(c.heldout_records, all.size() - 1);
    train_text.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(held));
    heldout_text.assign(all.end() - static_cast<std::ptrdiff_t>(held), all.end());
  }
  std::vector<TextPair> everything = train_text;
  everything.insert(everything.end(), heldout_text.begin(), heldout_text.end());
  const Vocabulary vocab = corpus_vocabulary(everything);

  std::vector<EncodedRecord> train, heldout;
  std::size_t train_tokens = 0;
  for (const auto& r : train_text) {
    train.push_back(encode_record(vocab, r));
    train_tokens += train.back().tokens.size();
  }
  for (const auto& r : heldout_text) heldout.push_back(encode_record(vocab, r));
  if (train_tokens < c.context + 1) {
    throw std::invalid_argument("corpus smaller than context window: " + std::to_string(train_tokens) +
                                " tokens for a context of " + std::to_string(c.context));
  }
  const std::span<const EncodedRecord> probe(heldout.data(), std::min(c.probe_records, heldout.size()));

  const LmConfig lm{vocab.size(), c.context, c.embed, c.hidden1, c.hidden2};
  const std::size_t steps_per_epoch = (train.size() + c.batch_sequences - 1) / c.batch_sequences;
  const SgdConfig sgd{c.learning_rate, c.schedule == "cosine" ? LrSchedule::kCosine : LrSchedule::kConstant,
                      steps_per_epoch * c.epochs};
  const QuantileScope scope = parse_quantile_scope(c.scope);
  const EnsembleConfig ensemble{c.n_samples, c.dropout_rate};

  RunResult result;
  result.experiment = "token-curriculum";
  result.config = c;
  result.config_hash = config_hash(result.config);
  result.seed = c.seed;
  result.columns = {"train_loss", "heldout_nll", "selected_fraction"};

  std::map<std::string, TinyCausalLM> models;
  std::map<std::string, Curve> curves;
  std::vector<std::size_t> order(train.size());

  // "mle" is trained first: the combined objective distills from it.
  std::vector<std::string> objectives = c.objectives;
  std::stable_partition(objectives.begin(), objectives.end(), [](const std::string& o) { return o == "mle"; });

  for (const auto& objective : objectives) {
    TinyCausalLM model(lm, root.fork(kInitStream));
    std::vector<Var> params = model.parameters();
    Curve curve;
    curve.heldout_nll.push_back(mean_eligible_nll(model, heldout));
    const TinyCausalLM* reference = objective == "combined" ? &models.at("mle") : nullptr;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      RngStream shuffle = root.fork(kOrderStream).fork(epoch);
      shuffle.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += c.batch_sequences) {
        std::vector<EncodedRecord> batch;
        for (std::size_t i = start; i < std::min(order.size(), start + c.batch_sequences); ++i) batch.push_back(train[order[i]]);
        const SiteBatch sites = eligible_sites(batch, c.context);
        RngStream dropout = root.fork(kDropoutStream).at(step * kEnsembleStride);
        const Var lp = model.log_probs(sites.windows, ForwardMode::train(dropout, c.train_dropout));
        Var loss;
        double selected = 1.0;
        if (objective == "mle") {
          loss = weighted_loss(lp, MleDelta{sites.targets});
        } else if (objective == "masked_mle") {
          const auto mask = select_mask_by_quantile(token_nll(lp.value(), sites.targets), c.quantile, scope, sites.sequence);
          selected = static_cast<double>(mask.selected_count()) / static_cast<double>(sites.targets.size());
          loss = masked_mle_loss(lp, sites.targets, mask);
        } else {
          const auto ref = softmax(reference->log_probs(sites.windows, ForwardMode::eval()).value());
          const CombinedLoss combined =
              combined_masked_mle_distill_loss(lp, sites.targets, ref, c.quantile, {scope, sites.sequence, sites.position});
          selected = static_cast<double>(combined.mask.selected_count()) / static_cast<double>(sites.targets.size());
          loss = combined.loss;
        }
        ++step;
        backward(loss);
        sgd_step(params, sgd, step - 1);
        zero_grad(params);
        curve.train_loss.push_back(loss.value().item());
        curve.selected_fraction.push_back(selected);
      }
      curve.heldout_nll.push_back(mean_eligible_nll(model, heldout));
      curve.epoch_end_step.push_back(step);
      const std::size_t logged_epoch = epoch + 1;
      if (logged_epoch % c.trace_every == 0 || logged_epoch == c.epochs) {
        TokenTrace trace = token_trace(model, vocab, probe, c.quantile, ensemble, root.fork(kTraceStream).fork(epoch));
        trace.objective = objective;
        trace.epoch = logged_epoch;
        result.traces.push_back(std::move(trace));
      }
    }
    result.artifacts.emplace_back("checkpoints/" + objective + ".json", lm_checkpoint_to_string(model, vocab));
    models.emplace(objective, std::move(model));
    curves.emplace(objective, std::move(curve));
  }

  const std::size_t total_steps = steps_per_epoch * c.epochs;
  for (const auto& o : c.objectives) result.add_row(0, o, {std::nan(""), curves.at(o).heldout_nll[0], std::nan("")});
  for (std::size_t s = 1; s <= total_steps; ++s) {
    for (const auto& o : c.objectives) {
      const Curve& cv = curves.at(o);
      double heldout_nll = std::nan("");
      const auto it = std::find(cv.epoch_end_step.begin(), cv.epoch_end_step.end(), s);
      if (it != cv.epoch_end_step.end()) heldout_nll = cv.heldout_nll[1 + static_cast<std::size_t>(it - cv.epoch_end_step.begin())];
      result.add_row(s, o, {cv.train_loss[s - 1], heldout_nll, cv.selected_fraction[s - 1]});
    }
  }

  nlohmann::json perplexity = nlohmann::json::object(), correlations = nlohmann::json::object();
  for (const auto& o : c.objectives) {
    perplexity[o] = std::exp(curves.at(o).heldout_nll.back());
    for (auto it = result.traces.rbegin(); it != result.traces.rend(); ++it) {
      if (it->objective == o) {
        correlations[o] = trace_correlations(*it);
        break;
      }
    }
  }
  result.summary = {{"heldout_perplexity", perplexity},
                    {"probe_correlations", correlations},
                    {"vocabulary_size", vocab.size()},
                    {"train_records", train.size()},
                    {"heldout_records", heldout.size()},
                    {"probe_records", probe.size()},
                    {"mcdo", {{"n_samples", c.n_samples}, {"dropout_rate", c.dropout_rate}}}};
  return result;
}

RunResult run_uncertainty_probe(const ProbeConfig& c) {
  c.validate();
  const LmCheckpoint ck = load_lm_checkpoint(c.checkpoint);
  const TinyCausalLM model = ck.build();
  const RngStream root(c.seed);
  std::vector<TextPair> text =
      c.corpus.empty() ? bundled_corpus(c.probe_records, root.fork(kProbeCorpusStream)) : load_corpus(c.corpus);
  if (text.empty()) throw std::invalid_argument("probe corpus is empty");
  if (text.size() > c.probe_records) text.resize(c.probe_records);
  std::vector<EncodedRecord> records;
  for (const auto& t : text) records.push_back(encode_record(ck.vocabulary, t));

  RunResult result;
  result.experiment = "uncertainty-probe";
  result.config = c;
  result.config_hash = config_hash(result.config);
  result.seed = c.seed;
  result.columns = {"mean_nll", "mean_entropy", "mean_aleatoric", "mean_epistemic"};

  TokenTrace trace = token_trace(model, ck.vocabulary, records, c.quantile, EnsembleConfig{c.n_samples, c.dropout_rate},
                                 root.fork(kTraceStream));
  trace.objective = "probe";
  trace.epoch = 0;
  double nll = 0.0, entropy = 0.0, alea = 0.0, epis = 0.0;
  for (const auto& r : trace.records) {
    nll += r.nll;
    entropy += r.entropy;
    alea += r.aleatoric;
    epis += r.epistemic;
  }
  const double n = static_cast<double>(trace.records.size());
  result.add_row(0, "probe", {nll / n, entropy / n, alea / n, epis / n});
  result.summary = {{"correlations", trace_correlations(trace)}, {"tokens", trace.records.size()}};
  result.traces.push_back(std::move(trace));
  return result;
}

}  // namespace uncurl::experiments
