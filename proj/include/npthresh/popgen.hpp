#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "npthresh/errors.hpp"
#include "npthresh/rng.hpp"
#include "npthresh/stats.hpp"

namespace npt {

/**
 * Overlap regime between the convenience and reference mechanisms: High loads
 * the participation model with the same coefficients that drive the reference
 * size measure, Low negates them.
 */
enum class OverlapMode { High, Low };

inline std::string to_string(OverlapMode m) { return m == OverlapMode::High ? "H" : "L"; }

struct PopulationConfig {
  std::size_t n_units = 4000;
  std::size_t n_covariates = 5;  // first K-1 Bernoulli(0.5), last standard normal
  std::vector<double> beta = default_beta();
  OverlapMode mode = OverlapMode::High;
  double log_outcome_variance = 2.0;  // variance of log(y) around the linear predictor
  std::size_t target_n_reference = 400;
  double target_n_convenience = 800.0;  // expected convenience take, sum of participation probs
  std::uint64_t seed = 1;

  static std::vector<double> default_beta() { return {0.7, -0.5, 0.6, -0.4, 0.45}; }

  void validate() const {
    if (n_units == 0) throw config_error("population: n_units must be positive");
    if (n_covariates == 0) throw config_error("population: n_covariates must be positive");
    if (beta.size() != n_covariates) {
      throw config_error("population: beta has length " + std::to_string(beta.size()) +
                         " but n_covariates is " + std::to_string(n_covariates));
    }
    if (log_outcome_variance < 0.0) throw config_error("population: negative outcome variance");
    if (target_n_reference == 0 || target_n_reference > n_units) {
      throw config_error("population: target_n_reference must lie in [1, n_units]");
    }
    if (!(target_n_convenience > 0.0 && target_n_convenience < static_cast<double>(n_units))) {
      throw config_error("population: target_n_convenience must lie in (0, n_units)");
    }
  }
};

struct Population {
  std::vector<std::vector<double>> x;  // covariate rows, no intercept column
  std::vector<double> y;               // positive outcomes, log-normal around x*beta
  std::vector<double> size_r;          // reference-sample size measure log(exp(x*beta)+1)
  std::vector<double> pi_r_true;       // PPS inclusion probabilities, capped at 1
  std::vector<double> pi_c_true;       // convenience participation probabilities
  double conv_offset = 0.0;            // calibrated intercept of the participation model
  double true_mean = 0.0;              // finite-population mean of y

  std::size_t n() const { return y.size(); }
  std::size_t n_covariates() const { return x.empty() ? 0 : x.front().size(); }
};

/**
 * PPS inclusion probabilities for a fixed take of n_r: min(1, n_r * s / sum s).
 * Mass lost to the cap is not redistributed, so capped frames sum to < n_r.
 */
inline std::vector<double> pps_inclusion_probs(const std::vector<double>& sizes,
                                               std::size_t n_r) {
  if (sizes.empty()) throw std::domain_error("pps_inclusion_probs: empty size list");
  if (n_r == 0 || n_r > sizes.size()) {
    throw std::domain_error("pps_inclusion_probs: n_r outside [1, n]");
  }
  double total = 0.0;
  for (double s : sizes) {
    if (!(s > 0.0)) throw std::domain_error("pps_inclusion_probs: sizes must be positive");
    total += s;
  }
  std::vector<double> pi(sizes.size());
  const double scale = static_cast<double>(n_r) / total;
  for (std::size_t i = 0; i < sizes.size(); ++i) pi[i] = std::min(1.0, scale * sizes[i]);
  return pi;
}

/**
 * Intercept c such that sum_i inv_logit(lin_pred[i] + c) hits `target` within
 * `tol`. The sum is strictly increasing in c, so plain bisection suffices.
 */
inline double calibrate_offset(const std::vector<double>& lin_pred, double target,
                               double tol = 1e-6) {
  if (lin_pred.empty()) throw std::domain_error("calibrate_offset: empty linear predictor");
  if (!(target > 0.0 && target < static_cast<double>(lin_pred.size()))) {
    throw std::domain_error("calibrate_offset: target outside (0, n)");
  }
  const auto total = [&](double c) {
    double s = 0.0;
    for (double t : lin_pred) s += inv_logit(t + c);
    return s;
  };
  double lo = -40.0, hi = 40.0;
  while (total(lo) > target) lo *= 2.0;
  while (total(hi) < target) hi *= 2.0;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    mid = 0.5 * (lo + hi);
    const double s = total(mid);
    if (std::abs(s - target) <= tol) break;
    (s < target ? lo : hi) = mid;
  }
  return mid;
}

/**
 * Synthetic finite population. Covariate and outcome streams depend only on
 * (seed, stream tag), so switching OverlapMode changes participation
 * probabilities but leaves x and y bit-identical.
 */
inline Population generate_population(const PopulationConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_units;
  const std::size_t k = cfg.n_covariates;

  Population pop;
  pop.x.assign(n, std::vector<double>(k, 0.0));
  Rng cov_rng = stream_for(cfg.seed, StreamTag::covariates);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j + 1 < k; ++j) pop.x[i][j] = cov_rng.bernoulli(0.5) ? 1.0 : 0.0;
    pop.x[i][k - 1] = cov_rng.normal();
  }

  const auto dot = [&](std::size_t i, const std::vector<double>& b) {
    return std::inner_product(pop.x[i].begin(), pop.x[i].end(), b.begin(), 0.0);
  };

  pop.y.resize(n);
  Rng out_rng = stream_for(cfg.seed, StreamTag::outcomes);
  const double sd = std::sqrt(cfg.log_outcome_variance);
  for (std::size_t i = 0; i < n; ++i) pop.y[i] = std::exp(out_rng.normal(dot(i, cfg.beta), sd));
  pop.true_mean = mean(pop.y);

  pop.size_r.resize(n);
  for (std::size_t i = 0; i < n; ++i) pop.size_r[i] = softplus(dot(i, cfg.beta));
  pop.pi_r_true = pps_inclusion_probs(pop.size_r, cfg.target_n_reference);

  std::vector<double> beta_c = cfg.beta;
  if (cfg.mode == OverlapMode::Low) {
    for (double& b : beta_c) b = -b;
  }
  std::vector<double> lp(n);
  for (std::size_t i = 0; i < n; ++i) lp[i] = dot(i, beta_c);
  pop.conv_offset = calibrate_offset(lp, cfg.target_n_convenience);

  pop.pi_c_true.resize(n);
  for (std::size_t i = 0; i < n; ++i) pop.pi_c_true[i] = inv_logit(lp[i] + pop.conv_offset);
  return pop;
}

}  // namespace npt
