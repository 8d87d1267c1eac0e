// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "uncurl/experiments/runners.hpp"
#include "uncurl/models/polynomial.hpp"

namespace uncurl::experiments {

namespace {

double validation_loss(const PolynomialModel& model, std::span<const double> xs, std::span<const double> ys) {
  const auto pred = poly_eval(model, xs);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += 0.5 * (pred[i] - ys[i]) * (pred[i] - ys[i]);
  return total / static_cast<double>(pred.size());
}

double sample_variance(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

/// Spearman rho, or NaN when either side has no spread.
double guarded_spearman(std::span<const double> a, std::span<const double> b) {
  try {
    return spearman(a, b);
  } catch (const std::domain_error&) {
    return std::nan("");
  }
}

}  // namespace

RunResult run_alea_epis(const AleaEpisConfig& c) {
  c.validate();
  RunResult result;
  result.experiment = "alea-epis";
  result.config = c;
  result.config_hash = config_hash(result.config);
  result.seed = c.seed;
  result.columns = {"sigma", "rho_epistemic", "rho_aleatoric", "valid_epistemic", "valid_aleatoric"};

  const std::size_t n_coef = c.degree + 1;
  std::vector<double> val_x(c.n_validation);
  for (std::size_t i = 0; i < c.n_validation; ++i) {
    val_x[i] = c.n_validation == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(c.n_validation - 1);
  }

  const std::size_t stages = c.stage_sigmas.size();
  std::vector<std::vector<double>> rho_epis(stages), rho_alea(stages);
  nlohmann::json flagged = nlohmann::json::array();

  for (std::size_t t = 0; t < c.trials; ++t) {
    const RngStream trial = RngStream(c.seed).fork(1000 + t);
    RngStream truth_rng = trial.fork(0), data_rng = trial.fork(1), stage_rng = trial.fork(2), probe_rng = trial.fork(3);

    PolynomialModel truth{Tensor({n_coef})};
    for (double& v : truth.coefficients.data()) v = truth_rng.normal();
    std::vector<double> xs(c.n_train), ys(c.n_train), noise_scale(c.n_train);
    for (std::size_t i = 0; i < c.n_train; ++i) xs[i] = 2.0 * data_rng.uniform() - 1.0;
    const auto clean = poly_eval(truth, xs);
    for (std::size_t i = 0; i < c.n_train; ++i) {
      noise_scale[i] = c.aleatoric_scale * data_rng.uniform();
      ys[i] = clean[i] + noise_scale[i] * data_rng.normal();
    }
    const auto val_y = poly_eval(truth, val_x);

    // Stages share one perturbation direction so they differ only in its size.
    std::vector<double> direction(n_coef);
    for (double& v : direction) v = stage_rng.normal();
    std::vector<Tensor> probes(c.epistemic_samples, Tensor({n_coef}));
    for (auto& p : probes) {
      for (double& v : p.data()) v = c.epistemic_sigma * probe_rng.normal();
    }

    for (std::size_t s = 0; s < stages; ++s) {
      PolynomialModel start{truth.coefficients};
      for (std::size_t j = 0; j < n_coef; ++j) start.coefficients[j] += c.stage_sigmas[s] * direction[j];
      const double before = validation_loss(start, val_x, val_y);

      std::vector<double> decrement(c.n_train), epistemic(c.n_train);
      std::vector<double> predictions(c.epistemic_samples);
      for (std::size_t i = 0; i < c.n_train; ++i) {
        const std::span<const double> xi(&xs[i], 1), yi(&ys[i], 1);
        const PolynomialModel after = poly_gd_step(start, xi, yi, c.learning_rate);
        decrement[i] = before - validation_loss(after, val_x, val_y);
        for (std::size_t m = 0; m < c.epistemic_samples; ++m) {
          PolynomialModel perturbed{start.coefficients};
          for (std::size_t j = 0; j < n_coef; ++j) perturbed.coefficients[j] += probes[m][j];
          predictions[m] = poly_eval(perturbed, xi)[0];
        }
        epistemic[i] = sample_variance(predictions);
      }

      const double re = guarded_spearman(epistemic, decrement);
      const double ra = guarded_spearman(noise_scale, decrement);
      if (std::isnan(re)) flagged.push_back({{"trial", t}, {"sigma", c.stage_sigmas[s]}, {"rho", "epistemic"}});
      else rho_epis[s].push_back(re);
      if (std::isnan(ra)) flagged.push_back({{"trial", t}, {"sigma", c.stage_sigmas[s]}, {"rho", "aleatoric"}});
      else rho_alea[s].push_back(ra);
    }
  }

  auto mean_or_nan = [](const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double total = 0.0;
    for (double x : v) total += x;
    return total / static_cast<double>(v.size());
  };
  nlohmann::json per_trial = nlohmann::json::array();
  for (std::size_t s = 0; s < stages; ++s) {
    result.add_row(s, "stage",
                   {c.stage_sigmas[s], mean_or_nan(rho_epis[s]), mean_or_nan(rho_alea[s]),
                    static_cast<double>(rho_epis[s].size()), static_cast<double>(rho_alea[s].size())});
    per_trial.push_back({{"sigma", c.stage_sigmas[s]}, {"rho_epistemic", rho_epis[s]}, {"rho_aleatoric", rho_alea[s]}});
  }
  result.summary = {{"flagged", flagged}, {"per_trial", per_trial}};
  return result;
}

}  // namespace uncurl::experiments
