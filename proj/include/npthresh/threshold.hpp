#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "npthresh/errors.hpp"
#include "npthresh/propensity.hpp"
#include "npthresh/stats.hpp"

namespace npt {

/** Unit-level statistic the cutoff is applied to. Retention is strict: T > alpha. */
enum class ThresholdStatistic { OneArmPiC, Balanced, ReferenceOnly, Ratio };

enum class CutoffRule { Percentile, FixedPoint };

inline std::string to_string(ThresholdStatistic s) {
  switch (s) {
    case ThresholdStatistic::OneArmPiC: return "one_arm_pi_c";
    case ThresholdStatistic::Balanced: return "balanced";
    case ThresholdStatistic::ReferenceOnly: return "reference_only";
    case ThresholdStatistic::Ratio: return "ratio";
  }
  return "?";
}

inline double statistic_value(ThresholdStatistic s, double pi_c, double pi_r) {
  switch (s) {
    case ThresholdStatistic::OneArmPiC: return pi_c;
    case ThresholdStatistic::Balanced: return std::sqrt(pi_r * pi_c / (pi_r + pi_c));
    case ThresholdStatistic::ReferenceOnly: return pi_r;
    case ThresholdStatistic::Ratio: return pi_r / pi_c;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

struct ThresholdSpec {
  ThresholdStatistic statistic = ThresholdStatistic::Balanced;
  CutoffRule cutoff = CutoffRule::Percentile;
  double gamma = 0.05;  // percentile level, in (0, 0.5]
  bool hard = false;    // majority vote across draws, one set reused everywhere

  void validate() const {
    if (cutoff == CutoffRule::Percentile && !(gamma > 0.0 && gamma <= 0.5)) {
      throw config_error("threshold: gamma must lie in (0, 0.5]");
    }
    if (cutoff == CutoffRule::FixedPoint && statistic != ThresholdStatistic::OneArmPiC &&
        statistic != ThresholdStatistic::Balanced) {
      // the variance-optimality conditions exist only for these two statistics
      throw config_error("threshold: fixed_point cutoff requires the one-arm or balanced statistic");
    }
  }
};

struct FixedPointResult {
  double alpha = 0.0;
  std::size_t n_retained = 0;
  bool self_consistent = true;  // false only on the defensive retain-all path
};

// ---------------------------------------------------------------------------
// fixed-point solvers
//
// Both solvers scan prefixes of the sorted inputs. A prefix of size k is a
// candidate when the cutoff implied by its own mean leaves exactly that
// prefix retained. Several prefixes can qualify on discrete data; the
// returned one minimizes the trimmed-variance objective for its statistic
// (one-arm: sum(1/pi)/k^2, two-arm: sum(1/pi_c + 1/pi_r)/k^2), whose global
// argmin is always self-consistent. Ties keep the larger prefix.
// ---------------------------------------------------------------------------

namespace detail {

struct PrefixCandidate {
  std::size_t k;
  double alpha;
  double objective;
};

inline FixedPointResult pick_candidate(const std::vector<PrefixCandidate>& cands,
                                       std::size_t n_units) {
  if (cands.empty()) {
    // mathematically unreachable (the objective argmin always qualifies);
    // retain everything rather than empty the sample
    return {0.0, n_units, false};
  }
  const PrefixCandidate* best = &cands.front();
  for (const auto& c : cands) {
    if (c.objective < best->objective || (c.objective == best->objective && c.k > best->k)) {
      best = &c;
    }
  }
  return {best->alpha, best->k, true};
}

}  // namespace detail

/**
 * One-arm cutoff: the largest-propensity prefix whose alpha = k / (2 sum 1/pi)
 * satisfies 1/alpha = 2 * mean{1/pi : pi > alpha} with strict retention.
 */
inline FixedPointResult solve_fixed_point_one_arm(std::vector<double> pi_c) {
  if (pi_c.empty()) throw std::domain_error("solve_fixed_point_one_arm: empty input");
  for (double p : pi_c) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw std::domain_error("solve_fixed_point_one_arm: propensity outside (0, 1]");
    }
  }
  std::sort(pi_c.begin(), pi_c.end(), std::greater<>());
  const std::size_t n = pi_c.size();
  std::vector<detail::PrefixCandidate> cands;
  double sum_inv = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    sum_inv += 1.0 / pi_c[k - 1];
    const double alpha = static_cast<double>(k) / (2.0 * sum_inv);
    const bool in_ok = pi_c[k - 1] > alpha;
    const bool out_ok = (k == n) || (pi_c[k] <= alpha);
    if (in_ok && out_ok) {
      cands.push_back({k, alpha, sum_inv / (static_cast<double>(k) * static_cast<double>(k))});
    }
  }
  return detail::pick_candidate(cands, n);
}

/**
 * Two-arm cutoff over u_i = 1/pi_c_i + 1/pi_r_i: alpha satisfies
 * 1/alpha^2 = 2 * mean{u : u <= 1/alpha^2}; the acceptance set
 * {balanced statistic > alpha} is {u < 1/alpha^2}.
 */
inline FixedPointResult solve_fixed_point_two_arm(const std::vector<double>& pi_c,
                                                  const std::vector<double>& pi_r) {
  if (pi_c.empty() || pi_c.size() != pi_r.size()) {
    throw std::domain_error("solve_fixed_point_two_arm: need equal-length nonempty inputs");
  }
  std::vector<double> u(pi_c.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(pi_c[i] > 0.0 && pi_c[i] <= 1.0 && pi_r[i] > 0.0 && pi_r[i] <= 1.0)) {
      throw std::domain_error("solve_fixed_point_two_arm: propensity outside (0, 1]");
    }
    u[i] = 1.0 / pi_c[i] + 1.0 / pi_r[i];
  }
  std::sort(u.begin(), u.end());
  const std::size_t n = u.size();
  std::vector<detail::PrefixCandidate> cands;
  double sum_u = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    sum_u += u[k - 1];
    const double q = 2.0 * sum_u / static_cast<double>(k);  // 1/alpha^2
    const bool in_ok = u[k - 1] <= q;
    const bool out_ok = (k == n) || (u[k] > q);
    if (in_ok && out_ok) {
      cands.push_back({k, std::sqrt(1.0 / q),
                       sum_u / (static_cast<double>(k) * static_cast<double>(k))});
    }
  }
  return detail::pick_candidate(cands, n);
}

/**
 * Nearest-rank lower gamma-quantile (no interpolation); gamma in (0, 0.5].
 * With an all-equal input the returned cutoff equals the common value, which
 * would exclude every unit under strict retention; build_acceptance_sets
 * applies the retain-all override for that degenerate case.
 */
inline double percentile_cutoff(const std::vector<double>& values, double gamma) {
  if (values.empty()) throw std::domain_error("percentile_cutoff: empty input");
  if (!(gamma > 0.0 && gamma <= 0.5)) throw config_error("percentile_cutoff: gamma outside (0, 0.5]");
  return quantile_nearest_rank(values, gamma);
}

/**
 * Per-draw acceptance sets over the convenience units.
 *
 * Soft thresholding recomputes the cutoff and the set inside every draw; hard
 * (two-step) thresholding takes a majority vote over the soft sets (strictly
 * more than half the draws) and reuses the voted set everywhere. The
 * switch_fraction diagnostic is always computed from the soft sets: per unit,
 * the fraction of draws spent on the minority side of its own in/out split.
 */
struct AcceptanceSets {
  std::size_t n_units = 0;
  std::size_t n_draws = 0;
  std::vector<std::vector<char>> accept;    // [s][i]
  std::vector<double> alpha;                // per-draw cutoff
  std::vector<std::size_t> retained_count;  // per-draw |A_s|
  std::vector<double> switch_fraction;      // per-unit, from the soft sets
  std::size_t degenerate_draws = 0;         // draws hit by the retain-all override
};

inline AcceptanceSets build_acceptance_sets(const PropensityDraws& draws,
                                            const ThresholdSpec& spec) {
  spec.validate();
  if (draws.n_draws == 0) throw std::domain_error("build_acceptance_sets: no draws");
  const std::size_t n = draws.conv_pi_c.front().size();
  AcceptanceSets sets;
  sets.n_units = n;
  sets.n_draws = draws.n_draws;
  sets.accept.assign(draws.n_draws, std::vector<char>(n, 0));
  sets.alpha.assign(draws.n_draws, 0.0);
  sets.retained_count.assign(draws.n_draws, 0);

  std::vector<double> stat(n);
  std::vector<std::size_t> in_count(n, 0);
  for (std::size_t s = 0; s < draws.n_draws; ++s) {
    const auto& pc = draws.conv_pi_c[s];
    const auto& pr = draws.conv_pi_r[s];
    for (std::size_t i = 0; i < n; ++i) stat[i] = statistic_value(spec.statistic, pc[i], pr[i]);

    double alpha = 0.0;
    if (spec.cutoff == CutoffRule::Percentile) {
      alpha = percentile_cutoff(stat, spec.gamma);
    } else if (spec.statistic == ThresholdStatistic::OneArmPiC) {
      alpha = solve_fixed_point_one_arm(pc).alpha;
    } else {
      alpha = solve_fixed_point_two_arm(pc, pr).alpha;
    }
    sets.alpha[s] = alpha;

    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool in = stat[i] > alpha;
      sets.accept[s][i] = in ? 1 : 0;
      kept += in ? 1 : 0;
    }
    if (kept == 0) {  // degenerate all-equal distribution: retain all instead
      std::fill(sets.accept[s].begin(), sets.accept[s].end(), char(1));
      kept = n;
      ++sets.degenerate_draws;
    }
    sets.retained_count[s] = kept;
    for (std::size_t i = 0; i < n; ++i) in_count[i] += sets.accept[s][i];
  }

  sets.switch_fraction.resize(n);
  const auto s_total = static_cast<double>(draws.n_draws);
  for (std::size_t i = 0; i < n; ++i) {
    const auto in = static_cast<double>(in_count[i]);
    sets.switch_fraction[i] = std::min(in, s_total - in) / s_total;
  }

  if (spec.hard) {
    // strictly more than half the draws; a tie at exactly S/2 stays excluded
    std::vector<char> voted(n, 0);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      voted[i] = (2 * in_count[i] > draws.n_draws) ? 1 : 0;
      kept += voted[i];
    }
    for (std::size_t s = 0; s < draws.n_draws; ++s) {
      sets.accept[s] = voted;
      sets.retained_count[s] = kept;
    }
  }
  return sets;
}

}  // namespace npt
