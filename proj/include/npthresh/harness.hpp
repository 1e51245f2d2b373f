#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "npthresh/errors.hpp"
#include "npthresh/estimator.hpp"
#include "npthresh/popgen.hpp"
#include "npthresh/propensity.hpp"
#include "npthresh/rng.hpp"
#include "npthresh/sampler.hpp"
#include "npthresh/threshold.hpp"

namespace npt {

enum class EstimatorVariant {
  TrueWeights,          // true pi_c and pi_r for every sampled unit, no thresholding
  SmoothedNoThreshold,  // model draws for both arms, no thresholding
  BalancedSoft,         // balanced statistic, per-draw percentile cutoff
  BalancedHardTwoStep,  // balanced statistic, majority-vote set reused across draws
  ReferenceOnlyStat,    // reference-arm probability as the statistic, soft
  RatioStat,            // pi_r / pi_c as the statistic, soft
  ReferenceSampleOnly,  // drop the convenience arm entirely
};

inline std::string to_string(EstimatorVariant v) {
  switch (v) {
    case EstimatorVariant::TrueWeights: return "true_weights";
    case EstimatorVariant::SmoothedNoThreshold: return "smoothed_no_threshold";
    case EstimatorVariant::BalancedSoft: return "balanced_soft";
    case EstimatorVariant::BalancedHardTwoStep: return "balanced_hard_two_step";
    case EstimatorVariant::ReferenceOnlyStat: return "reference_only_stat";
    case EstimatorVariant::RatioStat: return "ratio_stat";
    case EstimatorVariant::ReferenceSampleOnly: return "reference_sample_only";
  }
  return "?";
}

inline bool variant_is_thresholded(EstimatorVariant v) {
  return v == EstimatorVariant::BalancedSoft || v == EstimatorVariant::BalancedHardTwoStep ||
         v == EstimatorVariant::ReferenceOnlyStat || v == EstimatorVariant::RatioStat;
}

inline bool variant_needs_fit(EstimatorVariant v) {
  return v != EstimatorVariant::TrueWeights && v != EstimatorVariant::ReferenceSampleOnly;
}

inline std::vector<EstimatorVariant> all_variants() {
  return {EstimatorVariant::TrueWeights,        EstimatorVariant::SmoothedNoThreshold,
          EstimatorVariant::BalancedSoft,       EstimatorVariant::BalancedHardTwoStep,
          EstimatorVariant::ReferenceOnlyStat,  EstimatorVariant::RatioStat,
          EstimatorVariant::ReferenceSampleOnly};
}

struct ScenarioConfig {
  PopulationConfig population;
  PropensityConfig propensity;
  std::vector<EstimatorVariant> variants = all_variants();
  std::vector<double> gamma_list = {0.05};
  std::size_t iterations = 30;
  std::uint64_t seed = 20260815;
  std::size_t jobs = 0;  // 0 = all hardware threads; results never depend on this
  OverlapDenominator overlap_denominator = OverlapDenominator::Reference;

  void validate() const {
    population.validate();
    propensity.validate();
    if (iterations == 0) throw config_error("scenario: iterations must be positive");
    if (variants.empty()) throw config_error("scenario: no estimator variants selected");
    for (double g : gamma_list) {
      if (!(g > 0.0 && g <= 0.5)) throw config_error("scenario: gamma outside (0, 0.5]");
    }
    const bool any_thresholded =
        std::any_of(variants.begin(), variants.end(), variant_is_thresholded);
    if (any_thresholded && gamma_list.empty()) {
      throw config_error("scenario: thresholded variants need a nonempty gamma_list");
    }
  }
};

// salts for per-iteration substream derivation; stable, they feed seeds
inline constexpr std::uint64_t kSaltPopulation = 0xA1;
inline constexpr std::uint64_t kSaltReference = 0xA2;
inline constexpr std::uint64_t kSaltConvenience = 0xA3;
inline constexpr std::uint64_t kSaltMcmc = 0xA4;

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt, std::uint64_t index) {
  return mix64(base ^ mix64(salt ^ mix64(index)));
}

struct IterationRow {
  std::size_t iteration = 0;  // 1-based
  EstimatorVariant variant = EstimatorVariant::TrueWeights;
  double gamma = 0.0;  // 0 for variants without a threshold
  double mu_hat = 0.0;
  double mu_true = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool covered = false;
  double mean_retained = 0.0;  // convenience units kept, averaged over draws
  double overlap_pct = 0.0;
};

struct AggregateRow {
  EstimatorVariant variant = EstimatorVariant::TrueWeights;
  double gamma = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double mad = 0.0;
  double coverage = 0.0;
  std::size_t iterations = 0;
};

struct OverlapRow {
  std::size_t iteration = 0;
  std::size_t n_reference = 0;
  std::size_t n_convenience = 0;
  double overlap_pct = 0.0;
};

struct UncertaintyRow {
  ThresholdStatistic statistic = ThresholdStatistic::Balanced;
  double gamma = 0.0;
  std::size_t unit = 0;       // population unit id
  double pct_mean = 0.0;      // mean percentile of the unit's statistic across draws
  double pct_lo = 0.0;        // 5th percentile of that percentile (nearest rank)
  double pct_hi = 0.0;        // 95th percentile
  double switch_fraction = 0.0;
};

struct Metrics {
  double bias = 0.0;
  double rmse = 0.0;
  double mad = 0.0;
  double coverage = 0.0;
};

inline Metrics aggregate_metrics(const std::vector<double>& errors,
                                 const std::vector<char>& covered) {
  if (errors.empty() || errors.size() != covered.size()) {
    throw std::domain_error("aggregate_metrics: need matching nonempty inputs");
  }
  Metrics m;
  double sq = 0.0;
  std::vector<double> abs_err(errors.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    m.bias += errors[i];
    sq += errors[i] * errors[i];
    abs_err[i] = std::abs(errors[i]);
    hits += covered[i] ? 1 : 0;
  }
  const auto n = static_cast<double>(errors.size());
  m.bias /= n;
  m.rmse = std::sqrt(sq / n);
  m.mad = median(std::move(abs_err));
  m.coverage = static_cast<double>(hits) / n;
  return m;
}

struct ScenarioResult {
  OverlapMode mode = OverlapMode::High;
  std::vector<IterationRow> iterations;
  std::vector<AggregateRow> aggregate;
  std::vector<OverlapRow> overlap;
  std::vector<UncertaintyRow> uncertainty;  // diagnostic draws from iteration 1
  std::vector<std::string> warnings;
};

namespace detail {

/** Percentile (0..100) of each unit's statistic within one draw, ties at midrank. */
inline std::vector<double> percentile_ranks(const std::vector<double>& stat) {
  const std::size_t n = stat.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return stat[a] < stat[b]; });
  std::vector<double> pct(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && stat[order[j + 1]] == stat[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i) + static_cast<double>(j));
    for (std::size_t t = i; t <= j; ++t) {
      pct[order[t]] = 100.0 * (midrank + 0.5) / static_cast<double>(n);
    }
    i = j + 1;
  }
  return pct;
}

inline std::vector<UncertaintyRow> uncertainty_rows(const SampleSet& sample,
                                                    const PropensityDraws& draws,
                                                    ThresholdStatistic statistic, double gamma) {
  const std::size_t n = sample.convenience.size();
  ThresholdSpec spec;
  spec.statistic = statistic;
  spec.gamma = gamma;
  const AcceptanceSets sets = build_acceptance_sets(draws, spec);

  // per-unit trajectory of percentile ranks across draws
  std::vector<std::vector<double>> pct_by_unit(n, std::vector<double>(draws.n_draws, 0.0));
  std::vector<double> stat(n);
  for (std::size_t s = 0; s < draws.n_draws; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      stat[i] = statistic_value(statistic, draws.conv_pi_c[s][i], draws.conv_pi_r[s][i]);
    }
    const std::vector<double> pct = percentile_ranks(stat);
    for (std::size_t i = 0; i < n; ++i) pct_by_unit[i][s] = pct[i];
  }

  std::vector<UncertaintyRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].statistic = statistic;
    rows[i].gamma = gamma;
    rows[i].unit = sample.convenience[i];
    rows[i].pct_mean = mean(pct_by_unit[i]);
    rows[i].pct_lo = quantile_nearest_rank(pct_by_unit[i], 0.05);
    rows[i].pct_hi = quantile_nearest_rank(pct_by_unit[i], 0.95);
    rows[i].switch_fraction = sets.switch_fraction[i];
  }
  return rows;
}

struct IterationOutput {
  std::vector<IterationRow> rows;
  OverlapRow overlap;
  std::vector<UncertaintyRow> uncertainty;
  std::vector<std::string> warnings;
};

inline AcceptanceSets accept_everything(std::size_t n_units, std::size_t n_draws) {
  AcceptanceSets sets;
  sets.n_units = n_units;
  sets.n_draws = n_draws;
  sets.accept.assign(n_draws, std::vector<char>(n_units, 1));
  sets.alpha.assign(n_draws, 0.0);
  sets.retained_count.assign(n_draws, n_units);
  sets.switch_fraction.assign(n_units, 0.0);
  return sets;
}

inline IterationOutput run_iteration(const ScenarioConfig& cfg, std::size_t m) {
  IterationOutput out;

  PopulationConfig pop_cfg = cfg.population;
  pop_cfg.seed = derive_seed(cfg.seed, kSaltPopulation, m);
  const Population pop = generate_population(pop_cfg);

  Rng ref_rng(derive_seed(cfg.seed, kSaltReference, m));
  Rng conv_rng(derive_seed(cfg.seed, kSaltConvenience, m));
  const SampleSet sample = draw_samples(pop, pop_cfg.target_n_reference, ref_rng, conv_rng,
                                        cfg.overlap_denominator);
  out.overlap = {m + 1, sample.reference.size(), sample.convenience.size(), sample.overlap_pct};

  const bool needs_fit =
      std::any_of(cfg.variants.begin(), cfg.variants.end(), variant_needs_fit);
  PropensityDraws draws;
  if (needs_fit) {
    PropensityConfig prop_cfg = cfg.propensity;
    prop_cfg.seed = derive_seed(cfg.seed, kSaltMcmc, m);
    draws = fit_propensity(pop, sample, prop_cfg);
    for (const auto& w : draws.diagnostics.warnings) {
      out.warnings.push_back("iteration " + std::to_string(m + 1) + ": " + w);
    }
  }

  const auto emit = [&](EstimatorVariant v, double gamma, const EstimateSummary& s,
                        double mean_retained) {
    IterationRow row;
    row.iteration = m + 1;
    row.variant = v;
    row.gamma = gamma;
    row.mu_hat = s.mean;
    row.mu_true = pop.true_mean;
    row.ci_lo = s.ci_lo;
    row.ci_hi = s.ci_hi;
    row.covered = (s.ci_lo <= pop.true_mean && pop.true_mean <= s.ci_hi);
    row.mean_retained = mean_retained;
    row.overlap_pct = sample.overlap_pct;
    out.rows.push_back(row);
  };

  const auto n_conv = static_cast<double>(sample.convenience.size());
  for (EstimatorVariant v : cfg.variants) {
    switch (v) {
      case EstimatorVariant::TrueWeights: {
        std::vector<double> y_c(sample.convenience.size()), p_c(sample.convenience.size());
        for (std::size_t i = 0; i < sample.convenience.size(); ++i) {
          y_c[i] = pop.y[sample.convenience[i]];
          p_c[i] = pop.pi_c_true[sample.convenience[i]];
        }
        std::vector<double> y_r(sample.reference.size()), p_r(sample.reference.size());
        for (std::size_t j = 0; j < sample.reference.size(); ++j) {
          y_r[j] = pop.y[sample.reference[j]];
          p_r[j] = pop.pi_r_true[sample.reference[j]];
        }
        emit(v, 0.0, summarize_draws({hajek_combined_mean(y_c, p_c, y_r, p_r)}), n_conv);
        break;
      }
      case EstimatorVariant::ReferenceSampleOnly: {
        std::vector<double> y_r(sample.reference.size()), p_r(sample.reference.size());
        for (std::size_t j = 0; j < sample.reference.size(); ++j) {
          y_r[j] = pop.y[sample.reference[j]];
          p_r[j] = pop.pi_r_true[sample.reference[j]];
        }
        emit(v, 0.0, summarize_draws({hajek_combined_mean({}, {}, y_r, p_r)}), 0.0);
        break;
      }
      case EstimatorVariant::SmoothedNoThreshold: {
        const AcceptanceSets sets = accept_everything(sample.convenience.size(), draws.n_draws);
        emit(v, 0.0, estimate_domain(pop, sample, draws, sets, ReferenceWeights::Smoothed),
             n_conv);
        break;
      }
      default: {  // thresholded variants
        ThresholdSpec spec;
        spec.hard = (v == EstimatorVariant::BalancedHardTwoStep);
        spec.statistic = (v == EstimatorVariant::ReferenceOnlyStat)
                             ? ThresholdStatistic::ReferenceOnly
                             : (v == EstimatorVariant::RatioStat) ? ThresholdStatistic::Ratio
                                                                  : ThresholdStatistic::Balanced;
        for (double gamma : cfg.gamma_list) {
          spec.gamma = gamma;
          const AcceptanceSets sets = build_acceptance_sets(draws, spec);
          double mean_retained = 0.0;
          for (std::size_t c : sets.retained_count) mean_retained += static_cast<double>(c);
          mean_retained /= static_cast<double>(sets.n_draws);
          emit(v, gamma, estimate_domain(pop, sample, draws, sets, ReferenceWeights::Smoothed),
               mean_retained);
        }
        break;
      }
    }
  }

  // diagnostic statistic-uncertainty dump from the first iteration
  if (m == 0 && needs_fit) {
    std::vector<ThresholdStatistic> stats;
    for (EstimatorVariant v : cfg.variants) {
      ThresholdStatistic s;
      if (v == EstimatorVariant::BalancedSoft || v == EstimatorVariant::BalancedHardTwoStep) {
        s = ThresholdStatistic::Balanced;
      } else if (v == EstimatorVariant::ReferenceOnlyStat) {
        s = ThresholdStatistic::ReferenceOnly;
      } else if (v == EstimatorVariant::RatioStat) {
        s = ThresholdStatistic::Ratio;
      } else {
        continue;
      }
      if (std::find(stats.begin(), stats.end(), s) == stats.end()) stats.push_back(s);
    }
    for (ThresholdStatistic s : stats) {
      for (double gamma : cfg.gamma_list) {
        const auto rows = uncertainty_rows(sample, draws, s, gamma);
        out.uncertainty.insert(out.uncertainty.end(), rows.begin(), rows.end());
      }
    }
  }
  return out;
}

}  // namespace detail

/**
 * Full Monte Carlo study. Iterations are independent and all randomness is
 * keyed by (seed, salt, iteration), so results do not depend on the number of
 * worker threads and identical configs reproduce identical results.
 */
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const std::size_t m_total = cfg.iterations;
  std::vector<detail::IterationOutput> slots(m_total);

  std::size_t jobs = cfg.jobs == 0 ? std::thread::hardware_concurrency() : cfg.jobs;
  if (jobs == 0) jobs = 1;
  jobs = std::min(jobs, m_total);

  if (jobs <= 1) {
    for (std::size_t m = 0; m < m_total; ++m) slots[m] = detail::run_iteration(cfg, m);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t) {
      pool.emplace_back([&]() {
        for (std::size_t m = next.fetch_add(1); m < m_total; m = next.fetch_add(1)) {
          try {
            slots[m] = detail::run_iteration(cfg, m);
          } catch (...) {
            const std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  ScenarioResult result;
  result.mode = cfg.population.mode;
  for (auto& slot : slots) {
    result.iterations.insert(result.iterations.end(), slot.rows.begin(), slot.rows.end());
    result.overlap.push_back(slot.overlap);
    result.uncertainty.insert(result.uncertainty.end(), slot.uncertainty.begin(),
                              slot.uncertainty.end());
    result.warnings.insert(result.warnings.end(), slot.warnings.begin(), slot.warnings.end());
  }

  // aggregate per (variant, gamma), in first-appearance order
  std::vector<std::pair<EstimatorVariant, double>> keys;
  for (const auto& row : result.iterations) {
    const auto key = std::make_pair(row.variant, row.gamma);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [variant, gamma] : keys) {
    std::vector<double> errors;
    std::vector<char> covered;
    for (const auto& row : result.iterations) {
      if (row.variant == variant && row.gamma == gamma) {
        errors.push_back(row.mu_hat - row.mu_true);
        covered.push_back(row.covered ? 1 : 0);
      }
    }
    const Metrics m = aggregate_metrics(errors, covered);
    result.aggregate.push_back({variant, gamma, m.bias, m.rmse, m.mad, m.coverage, errors.size()});
  }
  return result;
}

}  // namespace npt
