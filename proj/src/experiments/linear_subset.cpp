// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "uncurl/experiments/runners.hpp"
#include "uncurl/linalg.hpp"
#include "uncurl/selection.hpp"

namespace uncurl::experiments {

namespace {

constexpr const char* kComputeMatched = "full_compute_matched";

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double scale, RngStream rng) {
  Tensor t({rows, cols});
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

Tensor orthonormal_rows(std::size_t n, std::size_t d, RngStream rng) {
  Eigen::MatrixXd g(d, n);
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(d, n);
  Tensor z({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z.at(i, j) = q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
  }
  return z;
}

Tensor observe(const Tensor& z, const Tensor& w_true, double noise, RngStream rng) {
  auto d = linalg::matvec(z, w_true.data());
  for (double& v : d) v += noise * rng.normal();
  return Tensor::vector(std::move(d));
}

double mean_half_squared_error(const Tensor& z, const Tensor& d, const Tensor& w) {
  if (z.dim(0) == 0) return std::nan("");
  const auto pred = linalg::matvec(z, w.data());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += 0.5 * (pred[i] - d[i]) * (pred[i] - d[i]);
  return total / static_cast<double>(pred.size());
}

}  // namespace

LinearInstance make_linear_instance(const LinearSubsetConfig& c) {
  c.validate();
  const RngStream root(c.seed);
  LinearInstance inst;
  Tensor z, holdout;
  if (c.instance == "orthonormal") {
    z = orthonormal_rows(c.n, c.d, root.fork(1));
    holdout = gaussian_matrix(c.holdout, c.d, 1.0 / std::sqrt(static_cast<double>(c.d)), root.fork(4));
  } else {
    z = gaussian_matrix(c.n, c.d, 1.0, root.fork(1));
    holdout = gaussian_matrix(c.holdout, c.d, 1.0, root.fork(4));
  }
  const Tensor w_true = gaussian_matrix(1, c.d, 1.0, root.fork(2));
  const Tensor w_flat = Tensor::vector(w_true.values());
  inst.system = LinearSystem{z, observe(z, w_flat, c.noise, root.fork(3)), Tensor({c.d}), c.lambda};
  inst.holdout_z = holdout;
  inst.holdout_d = observe(holdout, w_flat, c.noise, root.fork(5));
  return inst;
}

RunResult run_linear_subset(const LinearSubsetConfig& c) {
  c.validate();
  for (const auto& p : c.policies) {
    if (p == "exhaustive_oracle" && binomial(c.n, c.k) > c.exhaustive_cap) {
      throw std::length_error("exhaustive oracle needs C(" + std::to_string(c.n) + ", " + std::to_string(c.k) +
                              ") subsets, above the exhaustive_cap of " + std::to_string(c.exhaustive_cap));
    }
  }
  const LinearInstance inst = make_linear_instance(c);
  RunResult result;
  result.experiment = "linear-subset";
  result.config = c;
  result.config_hash = config_hash(result.config);
  result.seed = c.seed;
  result.columns = {"train_loss", "eval_loss"};

  // One random stream per policy, so adding a policy never shifts another's draws.
  std::vector<RngStream> streams;
  for (std::size_t i = 0; i < c.policies.size(); ++i) streams.push_back(RngStream(c.seed).fork(100 + i));

  auto with_k = [&](LinearSystem sys, const std::string& policy, RngStream& rng) {
    if (policy == kComputeMatched) {
      sys.lambda = c.lambda * static_cast<double>(c.k) / static_cast<double>(c.n);
      return linear_gd_step(sys);
    }
    const Tensor eps = linear_residual(sys);
    switch (parse_selection_kind(policy)) {
      case SelectionKind::kFull: return linear_gd_step(sys);
      case SelectionKind::kTopKResidual: return linear_gd_step(sys, topk_residual_mask(eps.data(), c.k).indicator);
      case SelectionKind::kExhaustiveOracle:
        return linear_gd_step(sys, exhaustive_optimal_mask(sys.z, eps.data(), sys.lambda, c.k, c.exhaustive_cap).indicator);
      case SelectionKind::kRandom: return linear_gd_step(sys, random_mask(sys.rows(), c.k, rng).indicator);
    }
    throw std::logic_error("unhandled selection policy");
  };

  auto record = [&](std::size_t step, const std::string& policy, const LinearSystem& sys) {
    result.add_row(step, policy, {linear_loss(sys), mean_half_squared_error(inst.holdout_z, inst.holdout_d, sys.w)});
  };

  if (c.mode == "independent") {
    std::vector<LinearSystem> states(c.policies.size(), inst.system);
    for (std::size_t p = 0; p < c.policies.size(); ++p) record(0, c.policies[p], states[p]);
    for (std::size_t step = 1; step <= c.steps; ++step) {
      for (std::size_t p = 0; p < c.policies.size(); ++p) {
        states[p].w = with_k(states[p], c.policies[p], streams[p]);
        record(step, c.policies[p], states[p]);
      }
    }
  } else {
    LinearSystem state = inst.system;
    for (const auto& p : c.policies) record(0, p, state);
    for (std::size_t step = 1; step <= c.steps; ++step) {
      Tensor next;
      for (std::size_t p = 0; p < c.policies.size(); ++p) {
        LinearSystem candidate = state;
        candidate.w = with_k(state, c.policies[p], streams[p]);
        record(step, c.policies[p], candidate);
        if (c.policies[p] == c.advance_policy) next = candidate.w;
      }
      state.w = next;
    }
  }

  nlohmann::json final_losses = nlohmann::json::object();
  for (const auto& p : c.policies) {
    const auto rows = result.rows_for(p);
    final_losses[p] = {{"train_loss", rows.back().values[0]}, {"eval_loss", rows.back().values[1]}};
  }
  result.summary = {{"final", final_losses}};
  return result;
}

}  // namespace uncurl::experiments
