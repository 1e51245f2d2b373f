#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "npthresh/popgen.hpp"
#include "npthresh/sampler.hpp"
#include "npthresh/stats.hpp"
#include "npthresh/threshold.hpp"

namespace npt {

/**
 * Hajek mean of the combined sample: retained convenience units weighted by
 * 1/pi_c, reference units by 1/pi_r, one shared normalizer.
 */
inline double hajek_combined_mean(const std::vector<double>& y_conv,
                                  const std::vector<double>& pi_conv,
                                  const std::vector<double>& y_ref,
                                  const std::vector<double>& pi_ref) {
  if (y_conv.size() != pi_conv.size() || y_ref.size() != pi_ref.size()) {
    throw std::domain_error("hajek_combined_mean: value/probability length mismatch");
  }
  if (y_conv.empty() && y_ref.empty()) {
    throw std::domain_error("hajek_combined_mean: both arms empty");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y_conv.size(); ++i) {
    if (!(pi_conv[i] > 0.0)) throw std::domain_error("hajek_combined_mean: nonpositive weight prob");
    num += y_conv[i] / pi_conv[i];
    den += 1.0 / pi_conv[i];
  }
  for (std::size_t i = 0; i < y_ref.size(); ++i) {
    if (!(pi_ref[i] > 0.0)) throw std::domain_error("hajek_combined_mean: nonpositive weight prob");
    num += y_ref[i] / pi_ref[i];
    den += 1.0 / pi_ref[i];
  }
  return num / den;
}

/**
 * Horvitz-Thompson form with known population size, kept behind this separate
 * entry point for exactness checks: mu_center + (1/N) * sum over both arms
 * of (y - mu_center)/pi. Centering at the true mean makes each arm an
 * unbiased estimator of zero, so the result is unbiased for the true mean.
 */
inline double two_arm_ht_mean(const std::vector<double>& y_conv,
                              const std::vector<double>& pi_conv,
                              const std::vector<double>& y_ref,
                              const std::vector<double>& pi_ref, std::size_t n_population,
                              double mu_center) {
  if (n_population == 0) throw std::domain_error("two_arm_ht_mean: empty population");
  if (y_conv.size() != pi_conv.size() || y_ref.size() != pi_ref.size()) {
    throw std::domain_error("two_arm_ht_mean: value/probability length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < y_conv.size(); ++i) s += (y_conv[i] - mu_center) / pi_conv[i];
  for (std::size_t i = 0; i < y_ref.size(); ++i) s += (y_ref[i] - mu_center) / pi_ref[i];
  return mu_center + s / static_cast<double>(n_population);
}

/** Weight source for the reference arm inside estimate_domain. */
enum class ReferenceWeights { TrueDesign, Smoothed };

struct EstimateSummary {
  std::vector<double> draws;  // per-draw estimates
  double mean = 0.0;
  double ci_lo = 0.0;  // 5th percentile over draws (nearest rank)
  double ci_hi = 0.0;  // 95th percentile over draws (nearest rank)
  bool degenerate = false;  // single draw: the interval carries no uncertainty
};

inline EstimateSummary summarize_draws(std::vector<double> estimates) {
  if (estimates.empty()) throw std::domain_error("summarize_draws: no estimates");
  EstimateSummary s;
  s.mean = mean(estimates);
  s.ci_lo = quantile_nearest_rank(estimates, 0.05);
  s.ci_hi = quantile_nearest_rank(estimates, 0.95);
  s.degenerate = estimates.size() == 1;
  s.draws = std::move(estimates);
  return s;
}

/**
 * Per-draw combined Hajek estimates of the population mean: draw s keeps the
 * convenience units accepted in draw s with weights from draw s, and always
 * keeps the whole reference arm (design or smoothed weights). The 90%
 * interval is the equal-tailed 5%/95% quantile band over draws.
 */
inline EstimateSummary estimate_domain(const Population& pop, const SampleSet& sample,
                                       const PropensityDraws& draws, const AcceptanceSets& sets,
                                       ReferenceWeights ref_weights) {
  if (sets.n_draws != draws.n_draws) {
    throw std::domain_error("estimate_domain: draws/sets shape mismatch");
  }
  std::vector<double> y_ref(sample.reference.size());
  std::vector<double> pi_ref_true(sample.reference.size());
  for (std::size_t j = 0; j < sample.reference.size(); ++j) {
    y_ref[j] = pop.y[sample.reference[j]];
    pi_ref_true[j] = pop.pi_r_true[sample.reference[j]];
  }

  std::vector<double> estimates(draws.n_draws);
  std::vector<double> y_keep, pi_keep;
  for (std::size_t s = 0; s < draws.n_draws; ++s) {
    y_keep.clear();
    pi_keep.clear();
    for (std::size_t i = 0; i < sample.convenience.size(); ++i) {
      if (sets.accept[s][i]) {
        y_keep.push_back(pop.y[sample.convenience[i]]);
        pi_keep.push_back(draws.conv_pi_c[s][i]);
      }
    }
    const std::vector<double>& pi_ref =
        ref_weights == ReferenceWeights::Smoothed ? draws.ref_pi_r[s] : pi_ref_true;
    estimates[s] = hajek_combined_mean(y_keep, pi_keep, y_ref, pi_ref);
  }
  return summarize_draws(std::move(estimates));
}

}  // namespace npt
