// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uncurl/objectives.hpp"

namespace uncurl::experiments {

/// One metric row. `values` line up with RunResult::columns; NaN marks a
/// value that does not apply to this row.
struct MetricRow {
  std::size_t step = 0;
  std::string policy;
  std::vector<double> values;
};

struct TokenTraceRecord {
  std::size_t sequence = 0;
  std::size_t position = 0;  // index of the predicted token within its sequence
  std::string token;
  std::size_t token_id = 0;
  double nll = 0.0;
  double entropy = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
  double total = 0.0;
  bool masked = false;
};

/// Per-token snapshot of one model on the probe set. `masked` flags equal
/// select_mask_by_quantile(nll column, quantile, per_batch).
struct TokenTrace {
  std::string objective;
  std::size_t epoch = 0;
  double quantile = 0.25;
  std::size_t n_samples = 100;
  double dropout_rate = 0.1;
  std::vector<TokenTraceRecord> records;

  std::vector<double> nll_column() const;
  std::vector<std::uint8_t> masked_column() const;
};

struct RunResult {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<std::string> columns;
  std::vector<MetricRow> rows;  // non-decreasing in step
  nlohmann::json summary = nlohmann::json::object();
  std::vector<TokenTrace> traces;
  /// Files produced by the run (checkpoints), relative path -> content.
  std::vector<std::pair<std::string, std::string>> artifacts;

  void add_row(std::size_t step, std::string policy, std::vector<double> values);
  /// Rows of one policy, in step order.
  std::vector<MetricRow> rows_for(const std::string& policy) const;
  /// Column index by name; throws std::out_of_range for unknown names.
  std::size_t column(const std::string& name) const;
};

/// "%.9g", with "nan" / "inf" / "-inf" for non-finite values.
std::string format_float(double value);

/// Header `config_hash,seed,policy,step,<columns>` and one LF-terminated line per row.
std::string metrics_csv(const RunResult& result);
nlohmann::json result_json(const RunResult& result);
nlohmann::json trace_json(const TokenTrace& trace, const RunResult& owner);
TokenTrace trace_from_json(const nlohmann::json& j);

/// Exclusive claim on `<root>/<experiment>/<hash>` held through a lock file;
/// a second claim on the same directory fails until the first is released.
class RunDirectory {
 public:
  RunDirectory(const std::filesystem::path& root, const std::string& experiment, const std::string& hash);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const std::filesystem::path& path() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  std::filesystem::path lock_;
};

/// Writes config.json (the config without "out"), metrics.csv, result.json, traces/<objective>_epoch<NNN>.json
/// and artifacts into the run directory, each file atomically. Returns the directory.
std::filesystem::path write_run(const RunResult& result, const std::filesystem::path& root);

/// Output root: `explicit_root` if non-empty, else $UNCURL_OUT, else "runs".
std::filesystem::path output_root(const std::string& explicit_root);

}  // namespace uncurl::experiments
