// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "uncurl/experiments/runners.hpp"
#include "uncurl/io.hpp"
#include "uncurl/objectives.hpp"

using namespace uncurl;
using namespace uncurl::experiments;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("uncurl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

bool message_contains(const std::function<void()>& fn, const std::string& needle) {
  try {
    fn();
  } catch (const std::exception& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

TokenCurriculumConfig small_curriculum() {
  TokenCurriculumConfig c;
  c.corpus_records = 48;
  c.heldout_records = 12;
  c.probe_records = 4;
  c.hidden1 = 16;
  c.hidden2 = 16;
  c.epochs = 2;
  c.batch_sequences = 8;
  c.trace_every = 1;
  c.n_samples = 6;
  return c;
}

}  // namespace

TEST_CASE("idx images and labels round trip through the binary encoding") {
  IdxImages images{3, 2, 2, Tensor({3, 4})};
  for (std::size_t i = 0; i < 12; ++i) images.pixels.data()[i] = static_cast<double>(i * 20) / 255.0;
  const IdxImages back = parse_idx_images(encode_idx_images(images));
  CHECK(back.count == 3);
  CHECK(back.rows == 2);
  CHECK(back.cols == 2);
  for (std::size_t i = 0; i < 12; ++i) CHECK(back.pixels.data()[i] == images.pixels.data()[i]);

  const std::vector<std::uint8_t> labels{0, 9, 4, 4};
  CHECK(parse_idx_labels(encode_idx_labels(labels)) == labels);
}

TEST_CASE("idx parsing reports the defect and its byte offset") {
  const std::string images = encode_idx_images(IdxImages{1, 2, 2, Tensor({1, 4})});
  CHECK(message_contains([&] { parse_idx_images(images.substr(0, 6), "imgs"); }, "imgs: truncated header at offset"));
  CHECK(message_contains([&] { parse_idx_images(images.substr(0, images.size() - 1)); }, "truncated payload"));
  CHECK(message_contains([&] { parse_idx_labels(images); }, "bad magic 0x"));
  CHECK_THROWS_AS(parse_idx_images(""), std::runtime_error);
  CHECK(message_contains([] { parse_idx_images(""); }, "truncated header"));
  CHECK(message_contains([] { load_idx_dataset("/nonexistent/mnist"); }, "/nonexistent/mnist"));
}

TEST_CASE("gaussian blobs are deterministic with labels in range") {
  const auto a = gaussian_blobs(50, 20, 5, 4, 1.0, RngStream(3));
  const auto b = gaussian_blobs(50, 20, 5, 4, 1.0, RngStream(3));
  CHECK(a.train.inputs.data().size() == 250);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.test.inputs.values() == b.test.inputs.values());
  for (std::size_t l : a.train.labels) CHECK(l < 4);
}

TEST_CASE("corpus parsing splits on the first tab and names bad lines") {
  const auto records = parse_corpus("2+2=\t4\ncolor of sky?\tblue\tish\n\n");
  REQUIRE(records.size() == 2);
  CHECK(records[1].prompt == "color of sky?");
  CHECK(records[1].response == "blue\tish");
  CHECK(message_contains([] { parse_corpus("ok\tfine\nno tab here\n", "c.tsv"); }, "c.tsv:2"));
  CHECK(bundled_corpus(30, RngStream(1)).size() == 30);
}

TEST_CASE("config decoding fills defaults and rejects unknown or mistyped keys") {
  const auto c = json{{"seed", 5}, {"k", 2}}.get<LinearSubsetConfig>();
  CHECK(c.seed == 5);
  CHECK(c.k == 2);
  CHECK(c.n == 10);
  CHECK_THROWS_WITH_AS(json({{"kk", 2}}).get<LinearSubsetConfig>(), "unknown config key 'kk'", std::invalid_argument);
  CHECK(message_contains([] { json({{"k", "three"}}).get<LinearSubsetConfig>(); }, "'k'"));
  CHECK(message_contains([] { json({{"experiment", "alea-epis"}}).get<LinearSubsetConfig>(); }, "alea-epis"));

  const json echoed = TokenCurriculumConfig{};
  const auto back = echoed.get<TokenCurriculumConfig>();
  CHECK(json(back) == echoed);
  CHECK(back.quantile == 0.25);
  CHECK(back.n_samples == 100);
  CHECK(back.dropout_rate == 0.1);
}

TEST_CASE("config hash ignores the output root and tracks every other key") {
  LinearSubsetConfig a, b;
  b.out = "/elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("metric formatting is fixed precision with spelled-out non-finite values") {
  CHECK(format_float(0.1) == "0.1");
  CHECK(format_float(1.0 / 3.0) == "0.333333333");
  CHECK(format_float(std::nan("")) == "nan");
  CHECK(format_float(-INFINITY) == "-inf");

  RunResult r;
  r.config_hash = "00000000000000ab";
  r.seed = 4;
  r.columns = {"a"};
  r.add_row(0, "p", {1.5});
  r.add_row(1, "p", {std::nan("")});
  CHECK(metrics_csv(r) == "config_hash,seed,policy,step,a\n00000000000000ab,4,p,0,1.5\n00000000000000ab,4,p,1,nan\n");
  CHECK_THROWS_AS(r.add_row(0, "p", {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(r.add_row(2, "p", {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("run directories are exclusive while held") {
  const auto root = scratch_dir("lock");
  {
    RunDirectory first(root, "exp", "hash");
    CHECK_THROWS_AS(RunDirectory(root, "exp", "hash"), std::runtime_error);
  }
  CHECK_NOTHROW(RunDirectory(root, "exp", "hash"));
}

TEST_CASE("output root precedence is flag, then environment, then default") {
  ::setenv("UNCURL_OUT", "/env/root", 1);
  CHECK(output_root("flag") == "flag");
  CHECK(output_root("") == "/env/root");
  ::unsetenv("UNCURL_OUT");
  CHECK(output_root("") == "runs");
}

TEST_CASE("linear subset with zero steps records only the shared initial state") {
  LinearSubsetConfig c;
  c.steps = 0;
  const RunResult r = run_linear_subset(c);
  CHECK(r.rows.size() == c.policies.size());
  for (const auto& row : r.rows) {
    CHECK(row.step == 0);
    CHECK(row.values == r.rows.front().values);
  }
}

TEST_CASE("full gradient descent never increases the training loss below the stability bound") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LinearSubsetConfig c;
    c.seed = seed;
    c.policies = {"full"};
    c.advance_policy = "full";
    const LinearInstance inst = make_linear_instance(c);
    Eigen::MatrixXd z(c.n, c.d);
    for (std::size_t i = 0; i < c.n; ++i)
      for (std::size_t j = 0; j < c.d; ++j) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = inst.system.z.at(i, j);
    const double top = Eigen::JacobiSVD<Eigen::MatrixXd>(z).singularValues()(0);
    c.lambda = 0.99 / (top * top);
    const auto rows = run_linear_subset(c).rows_for("full");
    for (std::size_t s = 1; s < rows.size(); ++s) CHECK(rows[s].values[0] <= rows[s - 1].values[0] + 1e-12);
  }
}

TEST_CASE("orthonormal rows make the exhaustive oracle follow the top-k residual trajectory") {
  LinearSubsetConfig c;
  c.instance = "orthonormal";
  c.n = 6;
  c.d = 8;
  c.k = 2;
  c.lambda = 0.5;
  c.steps = 20;
  c.policies = {"topk_residual", "exhaustive_oracle"};
  const RunResult r = run_linear_subset(c);
  const auto topk = r.rows_for("topk_residual"), oracle = r.rows_for("exhaustive_oracle");
  for (std::size_t s = 0; s < topk.size(); ++s) CHECK(topk[s].values[0] == doctest::Approx(oracle[s].values[0]).epsilon(1e-12));
}

TEST_CASE("shared mode scores the oracle no worse than random at every step") {
  LinearSubsetConfig c;
  c.mode = "shared";
  c.steps = 15;
  const RunResult r = run_linear_subset(c);
  const auto oracle = r.rows_for("exhaustive_oracle"), random = r.rows_for("random");
  for (std::size_t s = 0; s < oracle.size(); ++s) CHECK(oracle[s].values[0] <= random[s].values[0] + 1e-12);
}

TEST_CASE("linear subset rejects oversized exhaustive searches and bad policy lists") {
  LinearSubsetConfig c;
  c.n = 40;
  c.k = 20;
  CHECK(message_contains([&] { run_linear_subset(c); }, "exhaustive_cap"));
  LinearSubsetConfig s;
  s.mode = "shared";
  s.policies = {"full", "random"};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("linear subset metrics are reproducible byte for byte") {
  LinearSubsetConfig c;
  c.seed = 11;
  CHECK(metrics_csv(run_linear_subset(c)) == metrics_csv(run_linear_subset(c)));
}

TEST_CASE("noiseless data leaves the aleatoric correlation undefined and flagged") {
  AleaEpisConfig c;
  c.trials = 3;
  c.epistemic_samples = 50;
  c.aleatoric_scale = 0.0;
  const RunResult r = run_alea_epis(c);
  CHECK(r.summary["flagged"].size() == c.trials * c.stage_sigmas.size());
  for (const auto& row : r.rows) {
    CHECK(std::isnan(row.values[2]));
    CHECK(row.values[4] == 0.0);
    CHECK(row.values[3] == 3.0);
  }
}

TEST_CASE("stage grid spans the default noise endpoints") {
  const AleaEpisConfig c;
  CHECK(c.stage_sigmas.front() == 1e-3);
  CHECK(c.stage_sigmas.back() == 1.0);
  CHECK(c.trials >= 30);
}

TEST_CASE("training on every row beats chance after one epoch") {
  QuantileClsConfig c;
  c.epochs = 1;
  c.bands = {0};
  const RunResult r = run_quantile_classification(c);
  const auto all = r.rows_for("band_0_100");
  REQUIRE(all.size() == 2);
  CHECK(all[1].values[r.column("test_accuracy")] > r.summary["chance_accuracy"].get<double>());
  CHECK(c.learning_rate == 0.01);
  CHECK(c.batch_size == 256);
  CHECK(c.epochs == 1);
  CHECK(QuantileClsConfig{}.epochs == 20);
}

TEST_CASE("loss bands partition a batch by ascending loss with ties to the lower index") {
  const std::vector<double> losses{5.0, 1.0, 3.0, 1.0};
  CHECK(band_mask(losses, 0, 2) == std::vector<std::uint8_t>{0, 1, 0, 1});
  CHECK(band_mask(losses, 0, 4) == std::vector<std::uint8_t>{0, 1, 0, 0});
  CHECK(band_mask(losses, 3, 4) == std::vector<std::uint8_t>{1, 0, 0, 0});
  CHECK_THROWS_AS(band_mask(losses, 4, 4), std::invalid_argument);

  RngStream rng(8);
  for (std::size_t trial = 0; trial < 50; ++trial) {
    std::vector<double> v(1 + rng.uniform_index(40));
    for (double& x : v) x = std::floor(4.0 * rng.uniform());
    const std::size_t count = 1 + rng.uniform_index(10);
    std::vector<int> hits(v.size(), 0);
    for (std::size_t b = 0; b < count; ++b) {
      const auto m = band_mask(v, b, count);
      for (std::size_t i = 0; i < v.size(); ++i) hits[i] += m[i];
    }
    for (int h : hits) CHECK(h == 1);
  }
}

TEST_CASE("encoded records frame the response and expose only its positions") {
  const std::vector<TextPair> pairs{{"1+1=", "2"}, {"hi", "yo"}};
  const Vocabulary vocab = corpus_vocabulary(pairs);
  const EncodedRecord rec = encode_record(vocab, pairs[0]);
  CHECK(rec.tokens.size() == 8);
  CHECK(rec.tokens.front() == Vocabulary::kBegin);
  CHECK(rec.tokens[5] == vocab.id('\t'));
  CHECK(rec.first_target == 6);
  CHECK(rec.tokens.back() == Vocabulary::kEndOfResponse);

  const std::vector<EncodedRecord> recs{rec, encode_record(vocab, pairs[1])};
  const SiteBatch sites = eligible_sites(recs, 4);
  CHECK(sites.targets.size() == 2 + 3);
  CHECK(sites.windows.size() == 5 * 4);
  CHECK(sites.position == std::vector<std::size_t>{6, 7, 4, 5, 6});
  CHECK(sites.targets[0] == vocab.id('2'));
  // The window of the first site ends with the separator that precedes it.
  CHECK(sites.windows[3] == vocab.id('\t'));
}

TEST_CASE("token curriculum traces carry masks recomputable from their NLL column") {
  const RunResult r = run_token_curriculum(small_curriculum());
  REQUIRE(r.traces.size() == 6);
  for (const auto& t : r.traces) {
    const auto recomputed = select_mask_by_quantile(t.nll_column(), t.quantile);
    CHECK(recomputed.flags == t.masked_column());
    for (const auto& rec : t.records) CHECK(rec.total == rec.aleatoric + rec.epistemic);
    const TokenTrace back = trace_from_json(trace_json(t, r));
    CHECK(back.nll_column() == t.nll_column());
    CHECK(back.masked_column() == t.masked_column());
  }
  const json meta = trace_json(r.traces.front(), r);
  CHECK(meta["mcdo"]["n_samples"] == 6);
  CHECK(meta["mcdo"]["dropout_rate"] == 0.1);
  CHECK(meta["config_hash"] == r.config_hash);
  CHECK(meta["artifact_version"] == kArtifactVersion);
  CHECK(r.artifacts.size() == 3);
  CHECK(r.summary["heldout_perplexity"].size() == 3);
  CHECK(r.summary["probe_correlations"]["mle"].size() == 4);
}

TEST_CASE("combined objective at q = 1 retraces the maximum-likelihood loss curve") {
  TokenCurriculumConfig c = small_curriculum();
  c.quantile = 1.0;
  c.objectives = {"mle", "combined"};
  const RunResult r = run_token_curriculum(c);
  const auto mle = r.rows_for("mle"), combined = r.rows_for("combined");
  REQUIRE(mle.size() == combined.size());
  for (std::size_t s = 1; s < mle.size(); ++s) {
    CHECK(std::abs(mle[s].values[0] - combined[s].values[0]) <= 1e-9 * std::abs(mle[s].values[0]));
  }
}

TEST_CASE("token curriculum rejects a corpus shorter than the context window") {
  const auto dir = scratch_dir("tiny_corpus");
  write_file_atomic(dir / "c.tsv", "a\tb\nc\td\n");
  TokenCurriculumConfig c = small_curriculum();
  c.corpus = (dir / "c.tsv").string();
  c.context = 16;
  CHECK(message_contains([&] { run_token_curriculum(c); }, "corpus smaller than context window"));
}

TEST_CASE("uncertainty probe is deterministic and degenerates at dropout rate zero") {
  const RunResult trained = run_token_curriculum(small_curriculum());
  const auto dir = scratch_dir("probe");
  write_file_atomic(dir / "mle.json", trained.artifacts.front().second);
  ProbeConfig p;
  p.checkpoint = (dir / "mle.json").string();
  p.n_samples = 8;
  const RunResult a = run_uncertainty_probe(p), b = run_uncertainty_probe(p);
  CHECK(trace_json(a.traces[0], a).dump() == trace_json(b.traces[0], b).dump());
  p.dropout_rate = 0.0;
  for (const auto& rec : run_uncertainty_probe(p).traces[0].records) CHECK(rec.epistemic == 0.0);
}

TEST_CASE("written runs are byte-identical across reruns") {
  const auto root_a = scratch_dir("rerun_a"), root_b = scratch_dir("rerun_b");
  TokenCurriculumConfig c = small_curriculum();
  c.epochs = 1;
  const auto da = write_run(run_token_curriculum(c), root_a);
  const auto db = write_run(run_token_curriculum(c), root_b);
  std::set<std::string> names;
  for (const auto& e : std::filesystem::recursive_directory_iterator(da)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), da);
    names.insert(rel.string());
    CHECK(read_file(e.path()) == read_file(db / rel));
  }
  CHECK(names.count("config.json") == 1);
  CHECK(names.count("metrics.csv") == 1);
  CHECK(names.count("traces/mle_epoch001.json") == 1);
  CHECK(names.count("checkpoints/combined.json") == 1);
  CHECK(names.count(".lock") == 0);
}
