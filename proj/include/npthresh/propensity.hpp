#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "npthresh/errors.hpp"
#include "npthresh/popgen.hpp"
#include "npthresh/rng.hpp"
#include "npthresh/sampler.hpp"
#include "npthresh/stats.hpp"

namespace npt {

enum class PropensityBackend { Mcmc, Mle };

struct PropensityConfig {
  PropensityBackend backend = PropensityBackend::Mcmc;
  std::size_t draws = 700;    // retained draws; an equal-length burn-in precedes them
  double prior_sd = 10.0;     // Normal(0, prior_sd^2) prior on each coefficient (MCMC only)
  double anchor_tau = 0.25;   // sd of the reference-arm anchor on the logit scale
  double grad_tol = 1e-8;     // max-norm stopping rule for the Newton solver
  std::size_t max_iter = 100; // Newton iteration cap
  std::uint64_t seed = 1;

  void validate() const {
    if (draws == 0) throw config_error("propensity: draws must be positive");
    if (!(prior_sd > 0.0)) throw config_error("propensity: prior_sd must be positive");
    if (!(anchor_tau > 0.0)) throw config_error("propensity: anchor_tau must be positive");
    if (!(grad_tol > 0.0)) throw config_error("propensity: grad_tol must be positive");
    if (max_iter == 0) throw config_error("propensity: max_iter must be positive");
  }
};

struct FitDiagnostics {
  bool converged = true;
  std::size_t iterations = 0;
  double grad_max_norm = 0.0;
  double acceptance_rate = 0.0;  // retained-phase Metropolis acceptance (MCMC backend)
  std::vector<std::string> warnings;
};

/**
 * Pooled-sample design for the membership model. One row per sample
 * membership; x rows carry a leading intercept column. Reference rows carry
 * the logit of their design inclusion probability as the anchor target.
 */
struct StackedDesign {
  std::vector<std::vector<double>> x;  // intercept-extended covariate rows
  std::vector<char> in_convenience;    // row indicator z
  std::vector<double> anchor_logit;    // defined for reference rows only
  std::size_t n_params() const { return 2 * (x.empty() ? 0 : x.front().size()); }
};

inline StackedDesign build_design(const Population& pop, const SampleSet& sample) {
  StackedDesign d;
  const auto rows = stack_samples(sample);
  if (rows.empty()) throw std::domain_error("build_design: no sampled rows");
  d.x.reserve(rows.size());
  d.in_convenience.reserve(rows.size());
  d.anchor_logit.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<double> xe;
    xe.reserve(pop.n_covariates() + 1);
    xe.push_back(1.0);
    xe.insert(xe.end(), pop.x[r.unit].begin(), pop.x[r.unit].end());
    d.x.push_back(std::move(xe));
    d.in_convenience.push_back(r.in_convenience ? 1 : 0);
    // capped design probabilities sit exactly at 1; clamp keeps the logit finite
    d.anchor_logit.push_back(r.in_convenience ? 0.0 : logit(clamp_prob(pop.pi_r_true[r.unit])));
  }
  return d;
}

// ---------------------------------------------------------------------------
// composite objective: Bernoulli membership + Gaussian logit anchor
//
// Parameters theta = [beta_c | beta_r], each of length (1 + K). Per row with
// linear predictors a = x*beta_c, b = x*beta_r, the convenience participation
// and reference arms have pi_c = sigmoid(a), pi_r = sigmoid(b) and the pooled
// membership probability is p = pi_c / (pi_c + pi_r). Reference rows add
// -(b - anchor)^2 / (2 tau^2).
// ---------------------------------------------------------------------------

namespace detail {

inline double log_sigmoid(double t) { return -softplus(-t); }

inline double log_sum_exp(double la, double lb) {
  const double m = std::max(la, lb);
  return m + std::log(std::exp(la - m) + std::exp(lb - m));
}

struct RowTerms {
  double la, lb;   // log pi_c, log pi_r
  double lse;      // log(pi_c + pi_r)
  double sa, sb;   // pi_c, pi_r
  double p;        // membership probability
};

inline RowTerms row_terms(double a, double b) {
  RowTerms t;
  t.la = log_sigmoid(a);
  t.lb = log_sigmoid(b);
  t.lse = log_sum_exp(t.la, t.lb);
  t.sa = inv_logit(a);
  t.sb = inv_logit(b);
  t.p = std::exp(t.la - t.lse);
  return t;
}

}  // namespace detail

inline double composite_loglik(const StackedDesign& d, const std::vector<double>& theta,
                               double anchor_tau) {
  const std::size_t k1 = theta.size() / 2;
  double ll = 0.0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < k1; ++j) {
      a += d.x[i][j] * theta[j];
      b += d.x[i][j] * theta[k1 + j];
    }
    const auto t = detail::row_terms(a, b);
    ll += (d.in_convenience[i] ? t.la : t.lb) - t.lse;
    if (!d.in_convenience[i]) {
      const double r = b - d.anchor_logit[i];
      ll -= r * r / (2.0 * anchor_tau * anchor_tau);
    }
  }
  return ll;
}

inline std::vector<double> composite_gradient(const StackedDesign& d,
                                              const std::vector<double>& theta,
                                              double anchor_tau) {
  const std::size_t k1 = theta.size() / 2;
  std::vector<double> g(theta.size(), 0.0);
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < k1; ++j) {
      a += d.x[i][j] * theta[j];
      b += d.x[i][j] * theta[k1 + j];
    }
    const auto t = detail::row_terms(a, b);
    const double z = d.in_convenience[i] ? 1.0 : 0.0;
    double gc = (1.0 - t.sa) * (z - t.p);
    double gr = (1.0 - t.sb) * (t.p - z);
    if (!d.in_convenience[i]) gr -= (b - d.anchor_logit[i]) / (anchor_tau * anchor_tau);
    for (std::size_t j = 0; j < k1; ++j) {
      g[j] += gc * d.x[i][j];
      g[k1 + j] += gr * d.x[i][j];
    }
  }
  return g;
}

namespace detail {

/** Log-likelihood, gradient, and Hessian in one pass (Eigen types). */
inline double eval_objective(const StackedDesign& d, const Eigen::VectorXd& theta,
                             double anchor_tau, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
  const std::size_t k1 = static_cast<std::size_t>(theta.size()) / 2;
  const double inv_tau2 = 1.0 / (anchor_tau * anchor_tau);
  double ll = 0.0;
  if (grad) grad->setZero(theta.size());
  if (hess) hess->setZero(theta.size(), theta.size());
  Eigen::VectorXd xrow(k1);
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    for (std::size_t j = 0; j < k1; ++j) xrow[static_cast<Eigen::Index>(j)] = d.x[i][j];
    const double a = xrow.dot(theta.head(k1));
    const double b = xrow.dot(theta.tail(k1));
    const auto t = row_terms(a, b);
    const double z = d.in_convenience[i] ? 1.0 : 0.0;
    ll += (d.in_convenience[i] ? t.la : t.lb) - t.lse;
    double anchor_resid = 0.0;
    if (!d.in_convenience[i]) {
      anchor_resid = b - d.anchor_logit[i];
      ll -= 0.5 * anchor_resid * anchor_resid * inv_tau2;
    }
    if (grad) {
      const double gc = (1.0 - t.sa) * (z - t.p);
      double gr = (1.0 - t.sb) * (t.p - z);
      if (!d.in_convenience[i]) gr -= anchor_resid * inv_tau2;
      grad->head(k1) += gc * xrow;
      grad->tail(k1) += gr * xrow;
    }
    if (hess) {
      // D = pi_c + pi_r; the ratios below stay finite through log-space
      const double sa_over_d2 = std::exp(t.la - 2.0 * t.lse);
      const double sb_over_d2 = std::exp(t.lb - 2.0 * t.lse);
      const double waa = -t.sa * (1.0 - t.sa) * ((z - t.p) + (1.0 - t.sa) * sb_over_d2);
      const double wab = t.sa * (1.0 - t.sa) * (1.0 - t.sb) * sb_over_d2;
      double wbb = -t.sb * (1.0 - t.sb) * ((t.p - z) + (1.0 - t.sb) * sa_over_d2);
      if (!d.in_convenience[i]) wbb -= inv_tau2;
      const Eigen::MatrixXd xxt = xrow * xrow.transpose();
      hess->topLeftCorner(k1, k1) += waa * xxt;
      hess->topRightCorner(k1, k1) += wab * xxt;
      hess->bottomLeftCorner(k1, k1) += wab * xxt;
      hess->bottomRightCorner(k1, k1) += wbb * xxt;
    }
  }
  return ll;
}

}  // namespace detail

struct MleFit {
  std::vector<double> theta;            // [beta_c | beta_r]
  std::vector<std::vector<double>> cov; // inverse observed information
  FitDiagnostics diagnostics;
};

/**
 * Newton maximization of the composite log-likelihood with step halving and a
 * ridge fallback for indefinite Hessians. Non-convergence within max_iter
 * (the usual symptom of separation in the membership model) raises
 * estimation_error carrying the iteration diagnostics.
 */
inline MleFit fit_mle(const StackedDesign& d, const PropensityConfig& cfg) {
  cfg.validate();
  const auto dim = static_cast<Eigen::Index>(d.n_params());
  if (dim == 0) throw std::domain_error("fit_mle: empty design");
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd grad(dim);
  Eigen::MatrixXd hess(dim, dim);
  double ll = detail::eval_objective(d, theta, cfg.anchor_tau, &grad, &hess);

  std::size_t iter = 0;
  double gnorm = grad.lpNorm<Eigen::Infinity>();
  for (; iter < cfg.max_iter && gnorm >= cfg.grad_tol; ++iter) {
    Eigen::VectorXd step;
    double ridge = 0.0;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd m = -hess + ridge * Eigen::MatrixXd::Identity(dim, dim);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
      if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) {
        step = ldlt.solve(grad);
        if (step.allFinite()) break;
      }
      step.resize(0);
      ridge = (ridge == 0.0) ? 1e-8 : ridge * 10.0;
    }
    if (step.size() == 0) {
      throw estimation_error("fit_mle: Hessian could not be stabilized", iter, gnorm);
    }
    double t = 1.0;
    bool moved = false;
    // summation noise in the objective is a few ulp per row; near the optimum
    // the true gain of a step sits below that, so accept within the noise and
    // leave termination to the gradient check
    const double ll_slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(ll));
    for (int halving = 0; halving < 50; ++halving, t *= 0.5) {
      const Eigen::VectorXd cand = theta + t * step;
      if (cand == theta) break;  // step rounded away entirely
      const double ll_cand = detail::eval_objective(d, cand, cfg.anchor_tau, nullptr, nullptr);
      if (std::isfinite(ll_cand) && ll_cand >= ll - ll_slack) {
        theta = cand;
        ll = ll_cand;
        moved = true;
        break;
      }
    }
    if (!moved) break;  // no ascent direction left; let the gradient check decide
    ll = detail::eval_objective(d, theta, cfg.anchor_tau, &grad, &hess);
    gnorm = grad.lpNorm<Eigen::Infinity>();
  }
  if (gnorm >= cfg.grad_tol) {
    throw estimation_error("fit_mle: no convergence, possible separation", iter, gnorm);
  }

  MleFit fit;
  fit.theta.assign(theta.data(), theta.data() + dim);
  Eigen::MatrixXd info = -hess;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(dim, dim));
  fit.cov.assign(static_cast<std::size_t>(dim), std::vector<double>(dim, 0.0));
  for (Eigen::Index r = 0; r < dim; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) fit.cov[r][c] = cov(r, c);
  }
  fit.diagnostics.converged = true;
  fit.diagnostics.iterations = iter;
  fit.diagnostics.grad_max_norm = gnorm;
  return fit;
}

struct McmcChain {
  std::vector<std::vector<double>> draws;  // retained theta draws
  FitDiagnostics diagnostics;
};

/**
 * Adaptive random-walk Metropolis over theta with Normal(0, prior_sd^2)
 * priors. The proposal is preconditioned on the MLE covariance when
 * available; the global scale adapts during burn-in toward an acceptance
 * rate in [0.2, 0.5] and is frozen afterwards.
 */
inline McmcChain fit_mcmc(const StackedDesign& d, const PropensityConfig& cfg, Rng rng) {
  cfg.validate();
  const auto dim = static_cast<Eigen::Index>(d.n_params());
  if (dim == 0) throw std::domain_error("fit_mcmc: empty design");

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd chol = Eigen::MatrixXd::Identity(dim, dim);
  FitDiagnostics diag;
  try {
    const MleFit init = fit_mle(d, cfg);
    for (Eigen::Index j = 0; j < dim; ++j) theta[j] = init.theta[static_cast<std::size_t>(j)];
    Eigen::MatrixXd cov(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
      for (Eigen::Index c = 0; c < dim; ++c) cov(r, c) = init.cov[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) chol = llt.matrixL();
  } catch (const estimation_error& e) {
    diag.warnings.push_back(std::string("mcmc: proposal fallback to identity: ") + e.what());
  }

  const double inv_prior_var = 1.0 / (cfg.prior_sd * cfg.prior_sd);
  const auto log_post = [&](const Eigen::VectorXd& t) {
    std::vector<double> tv(t.data(), t.data() + t.size());
    return composite_loglik(d, tv, cfg.anchor_tau) - 0.5 * inv_prior_var * t.squaredNorm();
  };

  double scale = 2.38 / std::sqrt(static_cast<double>(dim));
  double lp = log_post(theta);
  Eigen::VectorXd zvec(dim);
  const auto step_once = [&]() {
    for (Eigen::Index j = 0; j < dim; ++j) zvec[j] = rng.normal();
    const Eigen::VectorXd cand = theta + scale * (chol * zvec);
    const double lp_cand = log_post(cand);
    if (std::log(rng.uniform01_open_low()) < lp_cand - lp) {
      theta = cand;
      lp = lp_cand;
      return true;
    }
    return false;
  };

  const std::size_t burn = cfg.draws;
  std::size_t batch_accepts = 0;
  for (std::size_t s = 0; s < burn; ++s) {
    if (step_once()) ++batch_accepts;
    if ((s + 1) % 50 == 0) {
      const double rate = static_cast<double>(batch_accepts) / 50.0;
      if (rate < 0.2) scale *= 0.8;
      if (rate > 0.5) scale *= 1.25;
      batch_accepts = 0;
    }
  }

  McmcChain chain;
  chain.draws.reserve(cfg.draws);
  std::size_t accepts = 0;
  for (std::size_t s = 0; s < cfg.draws; ++s) {
    if (step_once()) ++accepts;
    chain.draws.emplace_back(theta.data(), theta.data() + dim);
  }
  diag.acceptance_rate = static_cast<double>(accepts) / static_cast<double>(cfg.draws);
  diag.iterations = burn + cfg.draws;
  if (diag.acceptance_rate < 0.05 || diag.acceptance_rate > 0.95) {
    diag.warnings.push_back("mcmc: retained-phase acceptance rate " +
                            std::to_string(diag.acceptance_rate) + " outside [0.05, 0.95]");
  }
  chain.diagnostics = std::move(diag);
  return chain;
}

/**
 * Per-draw predicted probabilities for the sampled units, clamped to
 * [1e-6, 1-1e-6]. Draw-major layout, aligned with the SampleSet id lists.
 */
struct PropensityDraws {
  std::size_t n_draws = 0;
  std::vector<std::vector<double>> coef;       // retained coefficient draws [s][param]
  std::vector<std::vector<double>> conv_pi_c;  // [s][convenience unit]
  std::vector<std::vector<double>> conv_pi_r;  // [s][convenience unit]
  std::vector<std::vector<double>> ref_pi_r;   // [s][reference unit] (smoothed weights)
  FitDiagnostics diagnostics;
};

namespace detail {

inline double predict_prob(const std::vector<double>& x, const std::vector<double>& theta,
                           std::size_t offset) {
  double t = theta[offset];  // intercept
  for (std::size_t j = 0; j < x.size(); ++j) t += x[j] * theta[offset + 1 + j];
  return clamp_prob(inv_logit(t));
}

}  // namespace detail

inline PropensityDraws predict_propensities(const Population& pop, const SampleSet& sample,
                                            const std::vector<std::vector<double>>& coef_draws,
                                            FitDiagnostics diagnostics) {
  PropensityDraws out;
  out.n_draws = coef_draws.size();
  out.coef = coef_draws;
  out.diagnostics = std::move(diagnostics);
  const std::size_t k1 = pop.n_covariates() + 1;
  out.conv_pi_c.assign(out.n_draws, std::vector<double>(sample.convenience.size(), 0.0));
  out.conv_pi_r.assign(out.n_draws, std::vector<double>(sample.convenience.size(), 0.0));
  out.ref_pi_r.assign(out.n_draws, std::vector<double>(sample.reference.size(), 0.0));
  for (std::size_t s = 0; s < out.n_draws; ++s) {
    const auto& th = coef_draws[s];
    for (std::size_t i = 0; i < sample.convenience.size(); ++i) {
      const auto& x = pop.x[sample.convenience[i]];
      out.conv_pi_c[s][i] = detail::predict_prob(x, th, 0);
      out.conv_pi_r[s][i] = detail::predict_prob(x, th, k1);
    }
    for (std::size_t j = 0; j < sample.reference.size(); ++j) {
      out.ref_pi_r[s][j] = detail::predict_prob(pop.x[sample.reference[j]], th, k1);
    }
  }
  return out;
}

/** Full fit: build the pooled design, run the chosen backend, predict. */
inline PropensityDraws fit_propensity(const Population& pop, const SampleSet& sample,
                                      const PropensityConfig& cfg) {
  const StackedDesign d = build_design(pop, sample);
  if (cfg.backend == PropensityBackend::Mle) {
    MleFit fit = fit_mle(d, cfg);
    return predict_propensities(pop, sample, {fit.theta}, std::move(fit.diagnostics));
  }
  McmcChain chain = fit_mcmc(d, cfg, stream_for(cfg.seed, StreamTag::mcmc));
  return predict_propensities(pop, sample, chain.draws, std::move(chain.diagnostics));
}

}  // namespace npt
