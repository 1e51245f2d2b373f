#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace npt {

// ---------------------------------------------------------------------------
// link functions
// ---------------------------------------------------------------------------

inline double inv_logit(double t) {
  // evaluate on the side that cannot overflow
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("logit: argument must lie strictly inside (0,1)");
  }
  return std::log(p / (1.0 - p));
}

/** log(1 + exp(t)) without overflow for large |t|. */
inline double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

// Estimated probabilities are clamped away from {0,1} before they are used as
// weights or threshold inputs.
inline constexpr double kProbFloor = 1e-6;
inline constexpr double kProbCeil = 1.0 - 1e-6;

inline double clamp_prob(double p) { return std::clamp(p, kProbFloor, kProbCeil); }

// ---------------------------------------------------------------------------
// summaries
// ---------------------------------------------------------------------------

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::domain_error("mean: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/** Median with the average-of-middle-two convention for even counts. */
inline double median(std::vector<double> v) {
  if (v.empty()) throw std::domain_error("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/**
 * Nearest-rank quantile (no interpolation): the smallest element whose rank
 * is >= ceil(p*n). p in (0,1]; p -> 0 clamps to the minimum.
 */
inline double quantile_nearest_rank(std::vector<double> v, double p) {
  if (v.empty()) throw std::domain_error("quantile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("quantile: p outside [0,1]");
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(p * n));
  if (rank == 0) rank = 1;
  if (rank > v.size()) rank = v.size();
  return v[rank - 1];
}

}  // namespace npt
