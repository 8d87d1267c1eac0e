// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: one subcommand per experiment. A JSON config file
// supplies the run parameters and flags override individual keys. The
// effective config is validated before the run and echoed next to its results.
#include <exception>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "uncurl/experiments/config.hpp"
#include "uncurl/experiments/runners.hpp"
#include "uncurl/io.hpp"

namespace {

using nlohmann::json;
namespace ex = uncurl::experiments;

/// Flags shared by every subcommand; unset optionals leave the config value alone.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> quantile;
  std::optional<double> dropout_rate;
  std::optional<std::size_t> n_samples;
  std::optional<std::string> corpus;
  std::optional<std::string> checkpoint;
};

struct Command {
  CLI::App* app = nullptr;
  Overrides flags;
  std::function<void(const json&)> check;        // throws on schema or range errors
  std::function<std::string(const json&)> run;  // effective config -> run directory
};

template <class Config>
void bind(Command& cmd, ex::RunResult (*fn)(const Config&)) {
  cmd.check = [](const json& effective) { effective.get<Config>().validate(); };
  cmd.run = [fn](const json& effective) {
    const Config config = effective.get<Config>();
    return ex::write_run(fn(config), ex::output_root(config.out)).string();
  };
}

void add_common(Command& cmd) {
  cmd.app->add_option("--config", cmd.flags.config_path, "JSON config file; omitted keys keep their defaults");
  cmd.app->add_option("--seed", cmd.flags.seed, "Seed overriding the config value");
  cmd.app->add_option("--out", cmd.flags.out, "Output root (default: $UNCURL_OUT, else ./runs)");
}

void add_uncertainty(Command& cmd) {
  cmd.app->add_option("--quantile", cmd.flags.quantile, "Fraction of highest-NLL tokens kept by the mask (default 0.25)")
      ->check(CLI::Range(0.0, 1.0));
  cmd.app->add_option("--dropout-rate", cmd.flags.dropout_rate, "MC dropout rate for uncertainty traces (default 0.1)")
      ->check(CLI::Range(0.0, 1.0));
  cmd.app->add_option("--n-samples", cmd.flags.n_samples, "MC dropout forward passes per trace (default 100)")
      ->check(CLI::PositiveNumber);
  cmd.app->add_option("--corpus", cmd.flags.corpus, "Tab-separated prompt/response file (default: bundled corpus)");
}

/// Config file contents with every set flag written over its key.
json effective_config(const Overrides& f) {
  json j = json::object();
  if (!f.config_path.empty()) {
    j = json::parse(uncurl::read_file(f.config_path));
    if (!j.is_object()) throw std::invalid_argument(f.config_path + ": config must be a JSON object");
  }
  if (f.seed) j["seed"] = *f.seed;
  if (f.out) j["out"] = *f.out;
  if (f.quantile) j["quantile"] = *f.quantile;
  if (f.dropout_rate) j["dropout_rate"] = *f.dropout_rate;
  if (f.n_samples) j["n_samples"] = *f.n_samples;
  if (f.corpus) j["corpus"] = *f.corpus;
  if (f.checkpoint) j["checkpoint"] = *f.checkpoint;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experiments on data selection driven by predictive uncertainty"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", ex::kArtifactVersion);

  std::vector<Command> commands(5);
  commands[0].app = app.add_subcommand("linear-subset", "Greedy data-subset selection on a linear system");
  bind(commands[0], &ex::run_linear_subset);
  commands[1].app = app.add_subcommand("alea-epis", "Polynomial-regression stages of aleatoric and epistemic value");
  bind(commands[1], &ex::run_alea_epis);
  commands[2].app = app.add_subcommand("quantile-cls", "Classifier training restricted to loss-quantile bands");
  bind(commands[2], &ex::run_quantile_classification);
  commands[3].app = app.add_subcommand("token-curriculum", "Token-level masked MLE and self-distillation training");
  bind(commands[3], &ex::run_token_curriculum);
  commands[4].app = app.add_subcommand("uncertainty-probe", "Per-token uncertainty trace of a saved language model");
  bind(commands[4], &ex::run_uncertainty_probe);

  for (auto& cmd : commands) add_common(cmd);
  add_uncertainty(commands[3]);
  add_uncertainty(commands[4]);
  commands[4].app->add_option("--checkpoint", commands[4].flags.checkpoint, "Language-model checkpoint JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (auto& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    json effective;
    try {
      effective = effective_config(cmd.flags);
      cmd.check(effective);
    } catch (const std::exception& e) {
      std::cerr << "uncurl: " << e.what() << "\n\n" << cmd.app->help();
      return 2;
    }
    try {
      std::cout << cmd.run(effective) << "\n";
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "uncurl: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
