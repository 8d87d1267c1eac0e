// SPDX-License-Identifier: Apache-2.0
#include "uncurl/experiments/results.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include "uncurl/experiments/config.hpp"
#include "uncurl/io.hpp"

namespace uncurl::experiments {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// The run config without its output root, which never changes a run, so the
/// echo is identical wherever the run was written.
json echoed_config(json config) {
  config.erase("out");
  return config;
}

std::string trace_file_name(const TokenTrace& t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_epoch%03zu.json", t.epoch);
  return t.objective + buf;
}

}  // namespace

std::vector<double> TokenTrace::nll_column() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.nll);
  return out;
}

std::vector<std::uint8_t> TokenTrace::masked_column() const {
  std::vector<std::uint8_t> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.masked ? 1 : 0);
  return out;
}

void RunResult::add_row(std::size_t step, std::string policy, std::vector<double> values) {
  if (values.size() != columns.size()) throw std::invalid_argument("metric row width does not match columns");
  if (!rows.empty() && step < rows.back().step) throw std::invalid_argument("metric rows must be ordered by step");
  rows.push_back({step, std::move(policy), std::move(values)});
}

std::vector<MetricRow> RunResult::rows_for(const std::string& policy) const {
  std::vector<MetricRow> out;
  for (const auto& r : rows) {
    if (r.policy == policy) out.push_back(r);
  }
  return out;
}

std::size_t RunResult::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw std::out_of_range("no metric column '" + name + "'");
}

std::string format_float(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

std::string metrics_csv(const RunResult& result) {
  std::string out = "config_hash,seed,policy,step";
  for (const auto& c : result.columns) out += "," + c;
  out += "\n";
  for (const auto& row : result.rows) {
    out += result.config_hash + "," + std::to_string(result.seed) + "," + row.policy + "," + std::to_string(row.step);
    for (double v : row.values) out += "," + format_float(v);
    out += "\n";
  }
  return out;
}

json result_json(const RunResult& result) {
  json rows = json::array();
  for (const auto& row : result.rows) {
    json values = json::object();
    for (std::size_t i = 0; i < result.columns.size(); ++i) values[result.columns[i]] = number_or_null(row.values[i]);
    rows.push_back({{"step", row.step}, {"policy", row.policy}, {"values", values}});
  }
  json traces = json::array();
  for (const auto& t : result.traces) traces.push_back("traces/" + trace_file_name(t));
  json artifacts = json::array();
  for (const auto& a : result.artifacts) artifacts.push_back(a.first);
  return {{"artifact_version", kArtifactVersion},
          {"experiment", result.experiment},
          {"config_hash", result.config_hash},
          {"seed", result.seed},
          {"config", echoed_config(result.config)},
          {"columns", result.columns},
          {"rows", rows},
          {"summary", result.summary},
          {"traces", traces},
          {"artifacts", artifacts}};
}

json trace_json(const TokenTrace& trace, const RunResult& owner) {
  json records = json::array();
  for (const auto& r : trace.records) {
    records.push_back({{"sequence", r.sequence},
                       {"position", r.position},
                       {"token", r.token},
                       {"token_id", r.token_id},
                       {"nll", r.nll},
                       {"entropy", r.entropy},
                       {"aleatoric", r.aleatoric},
                       {"epistemic", r.epistemic},
                       {"total", r.total},
                       {"masked", r.masked}});
  }
  return {{"artifact_version", kArtifactVersion},
          {"config_hash", owner.config_hash},
          {"seed", owner.seed},
          {"objective", trace.objective},
          {"epoch", trace.epoch},
          {"quantile", trace.quantile},
          {"scope", "per_batch"},
          {"mcdo", {{"n_samples", trace.n_samples}, {"dropout_rate", trace.dropout_rate}}},
          {"records", records}};
}

TokenTrace trace_from_json(const json& j) {
  TokenTrace t;
  t.objective = j.at("objective").get<std::string>();
  t.epoch = j.at("epoch").get<std::size_t>();
  t.quantile = j.at("quantile").get<double>();
  t.n_samples = j.at("mcdo").at("n_samples").get<std::size_t>();
  t.dropout_rate = j.at("mcdo").at("dropout_rate").get<double>();
  for (const auto& r : j.at("records")) {
    TokenTraceRecord rec;
    rec.sequence = r.at("sequence").get<std::size_t>();
    rec.position = r.at("position").get<std::size_t>();
    rec.token = r.at("token").get<std::string>();
    rec.token_id = r.at("token_id").get<std::size_t>();
    rec.nll = r.at("nll").get<double>();
    rec.entropy = r.at("entropy").get<double>();
    rec.aleatoric = r.at("aleatoric").get<double>();
    rec.epistemic = r.at("epistemic").get<double>();
    rec.total = r.at("total").get<double>();
    rec.masked = r.at("masked").get<bool>();
    t.records.push_back(std::move(rec));
  }
  return t;
}

RunDirectory::RunDirectory(const std::filesystem::path& root, const std::string& experiment, const std::string& hash)
    : dir_(root / experiment / hash), lock_(dir_ / ".lock") {
  std::filesystem::create_directories(dir_);
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw std::runtime_error("output directory " + dir_.string() + " is locked by another run (" + lock_.string() + ")");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunDirectory::~RunDirectory() {
  std::error_code ec;
  std::filesystem::remove(lock_, ec);
}

std::filesystem::path write_run(const RunResult& result, const std::filesystem::path& root) {
  RunDirectory dir(root, result.experiment, result.config_hash);
  const auto& p = dir.path();
  write_file_atomic(p / "config.json", echoed_config(result.config).dump(2) + "\n");
  write_file_atomic(p / "metrics.csv", metrics_csv(result));
  write_file_atomic(p / "result.json", result_json(result).dump(2) + "\n");
  for (const auto& t : result.traces) {
    write_file_atomic(p / "traces" / trace_file_name(t), trace_json(t, result).dump() + "\n");
  }
  for (const auto& [name, content] : result.artifacts) write_file_atomic(p / name, content);
  return p;
}

std::filesystem::path output_root(const std::string& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("UNCURL_OUT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

}  // namespace uncurl::experiments
