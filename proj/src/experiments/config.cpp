// SPDX-License-Identifier: Apache-2.0
#include "uncurl/experiments/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <type_traits>

#include "uncurl/objectives.hpp"
#include "uncurl/selection.hpp"

namespace uncurl::experiments {

using nlohmann::json;

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "config counts are parsed as 64-bit unsigned");

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw std::invalid_argument("config key '" + key + "': " + why);
}

void parse_value(const json& v, const std::string& key, std::uint64_t& out) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    bad_key(key, "expected a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

void parse_value(const json& v, const std::string& key, double& out) {
  if (!v.is_number()) bad_key(key, "expected a number");
  out = v.get<double>();
  if (!std::isfinite(out)) bad_key(key, "expected a finite number");
}

void parse_value(const json& v, const std::string& key, std::string& out) {
  if (!v.is_string()) bad_key(key, "expected a string");
  out = v.get<std::string>();
}

template <class T>
void parse_value(const json& v, const std::string& key, std::vector<T>& out) {
  if (!v.is_array()) bad_key(key, "expected an array");
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    T item{};
    parse_value(v[i], key + "[" + std::to_string(i) + "]", item);
    out.push_back(item);
  }
}

/// Reads known keys and rejects everything else.
class Reader {
 public:
  explicit Reader(const json& j) : j_(j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  }

  template <class T>
  Reader& field(const char* key, T& out) {
    known_.insert(key);
    if (const auto it = j_.find(key); it != j_.end()) parse_value(*it, key, out);
    return *this;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) throw std::invalid_argument("unknown config key '" + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::set<std::string> known_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void require_rate(double rate, const char* what) {
  require(rate >= 0.0 && rate < 1.0, std::string(what) + " must lie in [0, 1)");
}

}  // namespace

void LinearSubsetConfig::validate() const {
  require(n >= 1 && d >= 1, "linear-subset: n and d must be positive");
  require(k >= 1 && k <= n, "linear-subset: k must lie in [1, n]");
  require(lambda > 0.0, "linear-subset: lambda must be positive");
  require(noise >= 0.0, "linear-subset: noise must be non-negative");
  require(instance == "gaussian" || instance == "orthonormal", "linear-subset: instance must be gaussian or orthonormal");
  require(instance != "orthonormal" || n <= d, "linear-subset: orthonormal rows need n <= d");
  require(mode == "independent" || mode == "shared", "linear-subset: mode must be independent or shared");
  require(!policies.empty(), "linear-subset: at least one policy");
  for (const auto& p : policies) {
    if (p != "full_compute_matched") parse_selection_kind(p);
  }
  if (mode == "shared") {
    require(std::find(policies.begin(), policies.end(), advance_policy) != policies.end(),
            "linear-subset: advance_policy '" + advance_policy + "' must be one of the policies");
  }
}

void AleaEpisConfig::validate() const {
  require(trials >= 1, "alea-epis: trials must be positive");
  require(n_train >= 2 && n_validation >= 1, "alea-epis: need at least two training and one validation point");
  require(aleatoric_scale >= 0.0, "alea-epis: aleatoric_scale must be non-negative");
  require(epistemic_sigma > 0.0 && epistemic_samples >= 2, "alea-epis: epistemic probe needs sigma > 0 and >= 2 samples");
  require(learning_rate > 0.0, "alea-epis: learning_rate must be positive");
  require(!stage_sigmas.empty(), "alea-epis: stage_sigmas must be non-empty");
  for (double s : stage_sigmas) require(s >= 0.0, "alea-epis: stage sigmas must be non-negative");
}

void QuantileClsConfig::validate() const {
  require(dataset == "synthetic" || dataset == "idx", "quantile-cls: dataset must be synthetic or idx");
  require(dataset != "idx" || !idx_dir.empty(), "quantile-cls: idx dataset needs idx_dir");
  require(classes >= 2, "quantile-cls: need at least two classes");
  require(synthetic_train >= 1 && synthetic_test >= 1 && synthetic_width >= 1, "quantile-cls: empty synthetic dataset");
  require(synthetic_spread > 0.0, "quantile-cls: synthetic_spread must be positive");
  require(epochs >= 1 && batch_size >= 1, "quantile-cls: epochs and batch_size must be positive");
  require(learning_rate > 0.0, "quantile-cls: learning_rate must be positive");
  require(hidden1 >= 1 && hidden2 >= 1, "quantile-cls: hidden widths must be positive");
  require(band_count >= 1, "quantile-cls: band_count must be positive");
  for (std::size_t b : bands) require(b < band_count, "quantile-cls: band index out of range");
  require_rate(train_dropout, "quantile-cls: train_dropout");
}

void TokenCurriculumConfig::validate() const {
  require(corpus_records >= 1 && heldout_records >= 1, "token-curriculum: empty corpus split");
  require(probe_records >= 1 && probe_records <= heldout_records, "token-curriculum: probe_records must lie in [1, heldout_records]");
  require(context >= 1 && embed >= 1 && hidden1 >= 1 && hidden2 >= 1, "token-curriculum: model sizes must be positive");
  require(epochs >= 1 && batch_sequences >= 1, "token-curriculum: epochs and batch_sequences must be positive");
  require(learning_rate > 0.0, "token-curriculum: learning_rate must be positive");
  require(schedule == "constant" || schedule == "cosine", "token-curriculum: schedule must be constant or cosine");
  require_rate(train_dropout, "token-curriculum: train_dropout");
  require(quantile >= 0.0 && quantile <= 1.0, "token-curriculum: quantile must lie in [0, 1]");
  parse_quantile_scope(scope);
  require(!objectives.empty(), "token-curriculum: at least one objective");
  for (const auto& o : objectives) {
    require(o == "mle" || o == "masked_mle" || o == "combined", "token-curriculum: unknown objective '" + o + "'");
  }
  const bool has_mle = std::find(objectives.begin(), objectives.end(), "mle") != objectives.end();
  const bool has_combined = std::find(objectives.begin(), objectives.end(), "combined") != objectives.end();
  require(has_mle || !has_combined, "token-curriculum: the combined objective distills from the mle model, so mle must be listed");
  require(trace_every >= 1, "token-curriculum: trace_every must be positive");
  require(n_samples >= 1, "token-curriculum: n_samples must be positive");
  require_rate(dropout_rate, "token-curriculum: dropout_rate");
}

void ProbeConfig::validate() const {
  require(!checkpoint.empty(), "uncertainty-probe: checkpoint path required");
  require(probe_records >= 1, "uncertainty-probe: probe_records must be positive");
  require(n_samples >= 1, "uncertainty-probe: n_samples must be positive");
  require_rate(dropout_rate, "uncertainty-probe: dropout_rate");
  require(quantile >= 0.0 && quantile <= 1.0, "uncertainty-probe: quantile must lie in [0, 1]");
}

void to_json(json& j, const LinearSubsetConfig& c) {
  j = {{"experiment", "linear-subset"},
       {"seed", c.seed},
       {"n", c.n},
       {"d", c.d},
       {"k", c.k},
       {"lambda", c.lambda},
       {"steps", c.steps},
       {"noise", c.noise},
       {"holdout", c.holdout},
       {"instance", c.instance},
       {"mode", c.mode},
       {"policies", c.policies},
       {"advance_policy", c.advance_policy},
       {"exhaustive_cap", c.exhaustive_cap},
       {"out", c.out}};
}

void from_json(const json& j, LinearSubsetConfig& c) {
  std::string experiment = "linear-subset";
  Reader r(j);
  r.field("experiment", experiment)
      .field("seed", c.seed)
      .field("n", c.n)
      .field("d", c.d)
      .field("k", c.k)
      .field("lambda", c.lambda)
      .field("steps", c.steps)
      .field("noise", c.noise)
      .field("holdout", c.holdout)
      .field("instance", c.instance)
      .field("mode", c.mode)
      .field("policies", c.policies)
      .field("advance_policy", c.advance_policy)
      .field("exhaustive_cap", c.exhaustive_cap)
      .field("out", c.out)
      .finish();
  require(experiment == "linear-subset", "config is for experiment '" + experiment + "', not linear-subset");
}

void to_json(json& j, const AleaEpisConfig& c) {
  j = {{"experiment", "alea-epis"},
       {"seed", c.seed},
       {"trials", c.trials},
       {"degree", c.degree},
       {"n_train", c.n_train},
       {"n_validation", c.n_validation},
       {"aleatoric_scale", c.aleatoric_scale},
       {"epistemic_sigma", c.epistemic_sigma},
       {"epistemic_samples", c.epistemic_samples},
       {"learning_rate", c.learning_rate},
       {"stage_sigmas", c.stage_sigmas},
       {"out", c.out}};
}

void from_json(const json& j, AleaEpisConfig& c) {
  std::string experiment = "alea-epis";
  Reader(j)
      .field("experiment", experiment)
      .field("seed", c.seed)
      .field("trials", c.trials)
      .field("degree", c.degree)
      .field("n_train", c.n_train)
      .field("n_validation", c.n_validation)
      .field("aleatoric_scale", c.aleatoric_scale)
      .field("epistemic_sigma", c.epistemic_sigma)
      .field("epistemic_samples", c.epistemic_samples)
      .field("learning_rate", c.learning_rate)
      .field("stage_sigmas", c.stage_sigmas)
      .field("out", c.out)
      .finish();
  require(experiment == "alea-epis", "config is for experiment '" + experiment + "', not alea-epis");
}

void to_json(json& j, const QuantileClsConfig& c) {
  j = {{"experiment", "quantile-cls"},
       {"seed", c.seed},
       {"dataset", c.dataset},
       {"idx_dir", c.idx_dir},
       {"synthetic_train", c.synthetic_train},
       {"synthetic_test", c.synthetic_test},
       {"synthetic_width", c.synthetic_width},
       {"classes", c.classes},
       {"synthetic_spread", c.synthetic_spread},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"hidden1", c.hidden1},
       {"hidden2", c.hidden2},
       {"band_count", c.band_count},
       {"bands", c.bands},
       {"train_dropout", c.train_dropout},
       {"out", c.out}};
}

void from_json(const json& j, QuantileClsConfig& c) {
  std::string experiment = "quantile-cls";
  Reader(j)
      .field("experiment", experiment)
      .field("seed", c.seed)
      .field("dataset", c.dataset)
      .field("idx_dir", c.idx_dir)
      .field("synthetic_train", c.synthetic_train)
      .field("synthetic_test", c.synthetic_test)
      .field("synthetic_width", c.synthetic_width)
      .field("classes", c.classes)
      .field("synthetic_spread", c.synthetic_spread)
      .field("epochs", c.epochs)
      .field("learning_rate", c.learning_rate)
      .field("batch_size", c.batch_size)
      .field("hidden1", c.hidden1)
      .field("hidden2", c.hidden2)
      .field("band_count", c.band_count)
      .field("bands", c.bands)
      .field("train_dropout", c.train_dropout)
      .field("out", c.out)
      .finish();
  require(experiment == "quantile-cls", "config is for experiment '" + experiment + "', not quantile-cls");
}

void to_json(json& j, const TokenCurriculumConfig& c) {
  j = {{"experiment", "token-curriculum"},
       {"seed", c.seed},
       {"corpus", c.corpus},
       {"corpus_records", c.corpus_records},
       {"heldout_records", c.heldout_records},
       {"probe_records", c.probe_records},
       {"context", c.context},
       {"embed", c.embed},
       {"hidden1", c.hidden1},
       {"hidden2", c.hidden2},
       {"epochs", c.epochs},
       {"batch_sequences", c.batch_sequences},
       {"learning_rate", c.learning_rate},
       {"schedule", c.schedule},
       {"train_dropout", c.train_dropout},
       {"quantile", c.quantile},
       {"scope", c.scope},
       {"objectives", c.objectives},
       {"trace_every", c.trace_every},
       {"n_samples", c.n_samples},
       {"dropout_rate", c.dropout_rate},
       {"out", c.out}};
}

void from_json(const json& j, TokenCurriculumConfig& c) {
  std::string experiment = "token-curriculum";
  Reader(j)
      .field("experiment", experiment)
      .field("seed", c.seed)
      .field("corpus", c.corpus)
      .field("corpus_records", c.corpus_records)
      .field("heldout_records", c.heldout_records)
      .field("probe_records", c.probe_records)
      .field("context", c.context)
      .field("embed", c.embed)
      .field("hidden1", c.hidden1)
      .field("hidden2", c.hidden2)
      .field("epochs", c.epochs)
      .field("batch_sequences", c.batch_sequences)
      .field("learning_rate", c.learning_rate)
      .field("schedule", c.schedule)
      .field("train_dropout", c.train_dropout)
      .field("quantile", c.quantile)
      .field("scope", c.scope)
      .field("objectives", c.objectives)
      .field("trace_every", c.trace_every)
      .field("n_samples", c.n_samples)
      .field("dropout_rate", c.dropout_rate)
      .field("out", c.out)
      .finish();
  require(experiment == "token-curriculum", "config is for experiment '" + experiment + "', not token-curriculum");
}

void to_json(json& j, const ProbeConfig& c) {
  j = {{"experiment", "uncertainty-probe"},
       {"seed", c.seed},
       {"checkpoint", c.checkpoint},
       {"corpus", c.corpus},
       {"probe_records", c.probe_records},
       {"n_samples", c.n_samples},
       {"dropout_rate", c.dropout_rate},
       {"quantile", c.quantile},
       {"out", c.out}};
}

void from_json(const json& j, ProbeConfig& c) {
  std::string experiment = "uncertainty-probe";
  Reader(j)
      .field("experiment", experiment)
      .field("seed", c.seed)
      .field("checkpoint", c.checkpoint)
      .field("corpus", c.corpus)
      .field("probe_records", c.probe_records)
      .field("n_samples", c.n_samples)
      .field("dropout_rate", c.dropout_rate)
      .field("quantile", c.quantile)
      .field("out", c.out)
      .finish();
  require(experiment == "uncertainty-probe", "config is for experiment '" + experiment + "', not uncertainty-probe");
}

std::string config_hash(const json& config) {
  json canonical = config;
  if (canonical.is_object()) canonical.erase("out");
  const std::string text = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace uncurl::experiments
