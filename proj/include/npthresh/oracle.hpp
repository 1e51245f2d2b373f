#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace npt {

/**
 * Trimmed-variance curve of the propensity-weighted mean at cutoff eps:
 *
 *   var(eps) = sigma_y2 * F(eps) / G(eps)^2,
 *   F(eps)   = sum of 1/e over surviving units {e > eps},
 *   G(eps)   = number of surviving units.
 *
 * An empty surviving set yields +infinity (the curve emitter flags it).
 */
inline double variance_at_cutoff(const std::vector<double>& propensities, double sigma_y2,
                                 double eps) {
  if (propensities.empty()) throw std::domain_error("variance_at_cutoff: empty input");
  if (!(sigma_y2 > 0.0)) throw std::domain_error("variance_at_cutoff: sigma_y2 must be positive");
  double f = 0.0;
  std::size_t g = 0;
  for (double e : propensities) {
    if (!(e > 0.0 && e <= 1.0)) {
      throw std::domain_error("variance_at_cutoff: propensity outside (0, 1]");
    }
    if (e > eps) {
      f += 1.0 / e;
      ++g;
    }
  }
  if (g == 0) return std::numeric_limits<double>::infinity();
  return sigma_y2 * f / (static_cast<double>(g) * static_cast<double>(g));
}

/**
 * Discrete null condition of the curve above: the cutoff eps_c satisfying
 * 1/eps_c = 2 * mean{1/e : e > eps_c}. Same sorted prefix scan and candidate
 * policy as the one-arm fixed-point solver, maintained here as a separate
 * code path so the two can be cross-checked.
 */
inline double appendix_cutoff(std::vector<double> propensities) {
  if (propensities.empty()) throw std::domain_error("appendix_cutoff: empty input");
  for (double e : propensities) {
    if (!(e > 0.0 && e <= 1.0)) throw std::domain_error("appendix_cutoff: propensity outside (0, 1]");
  }
  std::sort(propensities.begin(), propensities.end(), std::greater<>());
  const std::size_t n = propensities.size();
  double best_eps = 0.0;
  double best_obj = std::numeric_limits<double>::infinity();
  bool found = false;
  double sum_inv = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    sum_inv += 1.0 / propensities[k - 1];
    const double kk = static_cast<double>(k);
    const double eps = kk / (2.0 * sum_inv);
    if (propensities[k - 1] > eps && (k == n || propensities[k] <= eps)) {
      const double obj = sum_inv / (kk * kk);  // curve value on this prefix, sans sigma_y2
      if (!found || obj <= best_obj) {         // ties keep the larger prefix
        best_eps = eps;
        best_obj = obj;
        found = true;
      }
    }
  }
  if (!found) return 0.0;  // defensive: no prefix qualified, cutoff admits all units
  return best_eps;
}

struct VarianceCurve {
  std::vector<double> eps;
  std::vector<double> var;
  double argmin_eps = 0.0;
  double cutoff = 0.0;         // appendix_cutoff of the same input
  bool empty_tail = false;     // some grid points had no survivors (var = +inf)
};

/** Curve sampled on the grid {step, 2*step, ...} inside (0,1), plus its argmin. */
inline VarianceCurve variance_curve(const std::vector<double>& propensities, double sigma_y2,
                                    double grid_step = 1e-3) {
  if (!(grid_step > 0.0 && grid_step < 1.0)) {
    throw std::domain_error("variance_curve: grid_step outside (0,1)");
  }
  VarianceCurve curve;
  double best = std::numeric_limits<double>::infinity();
  for (double eps = grid_step; eps < 1.0; eps += grid_step) {
    const double v = variance_at_cutoff(propensities, sigma_y2, eps);
    curve.eps.push_back(eps);
    curve.var.push_back(v);
    if (std::isinf(v)) curve.empty_tail = true;
    if (v < best) {
      best = v;
      curve.argmin_eps = eps;
    }
  }
  curve.cutoff = appendix_cutoff(propensities);
  return curve;
}

}  // namespace npt
