#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "npthresh/errors.hpp"
#include "npthresh/popgen.hpp"
#include "npthresh/rng.hpp"

namespace npt {

/** Denominator convention for the overlap percentage. */
enum class OverlapDenominator { Reference, Convenience, Union };

struct SampleSet {
  std::vector<std::size_t> reference;    // unit ids, fixed-size PPS draw
  std::vector<std::size_t> convenience;  // unit ids, Poisson draw
  double overlap_pct = 0.0;              // 100 * |ref intersect conv| / denominator
};

/**
 * Systematic PPS on a uniformly permuted frame: one random start u in [0,1),
 * selection points u, u+1, ..., intervals of length pi_r_true[i]. Marginal
 * inclusion probability equals pi_r_true[i] exactly, and the draw has fixed
 * size n_r whenever the capped probabilities still sum to n_r.
 */
inline std::vector<std::size_t> draw_reference_pps(const Population& pop, std::size_t n_r,
                                                   Rng& rng) {
  const std::size_t n = pop.n();
  if (n == 0) throw std::domain_error("draw_reference_pps: empty population");
  if (n_r == 0 || n_r > n) throw std::domain_error("draw_reference_pps: n_r outside [1, n]");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<std::size_t> picked;
  picked.reserve(n_r);
  double cum = 0.0;
  double point = rng.uniform01();
  for (std::size_t id : order) {
    const double next = cum + pop.pi_r_true[id];
    while (point < next) {  // interval length <= 1, so at most one point lands here
      picked.push_back(id);
      point += 1.0;
    }
    cum = next;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

/** Poisson sampling: unit i joins independently with pop.pi_c_true[i]. */
inline std::vector<std::size_t> draw_convenience_poisson(const Population& pop, Rng& rng) {
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < pop.n(); ++i) {
    if (rng.bernoulli(pop.pi_c_true[i])) picked.push_back(i);
  }
  return picked;
}

/** Overlap percentage between two sorted id lists. */
inline double overlap_percentage(const std::vector<std::size_t>& reference,
                                 const std::vector<std::size_t>& convenience,
                                 OverlapDenominator denom = OverlapDenominator::Reference) {
  std::vector<std::size_t> common;
  std::set_intersection(reference.begin(), reference.end(), convenience.begin(),
                        convenience.end(), std::back_inserter(common));
  double d = 0.0;
  switch (denom) {
    case OverlapDenominator::Reference: d = static_cast<double>(reference.size()); break;
    case OverlapDenominator::Convenience: d = static_cast<double>(convenience.size()); break;
    case OverlapDenominator::Union:
      d = static_cast<double>(reference.size() + convenience.size() - common.size());
      break;
  }
  if (d == 0.0) throw std::domain_error("overlap_percentage: empty denominator");
  return 100.0 * static_cast<double>(common.size()) / d;
}

inline SampleSet draw_samples(const Population& pop, std::size_t n_r, Rng& ref_rng, Rng& conv_rng,
                              OverlapDenominator denom = OverlapDenominator::Reference) {
  SampleSet s;
  s.reference = draw_reference_pps(pop, n_r, ref_rng);
  s.convenience = draw_convenience_poisson(pop, conv_rng);
  s.overlap_pct = overlap_percentage(s.reference, s.convenience, denom);
  return s;
}

/**
 * One row per sample membership; a unit belonging to both samples contributes
 * two rows. Convenience rows first, then reference rows.
 */
struct StackedRow {
  std::size_t unit;
  bool in_convenience;
};

inline std::vector<StackedRow> stack_samples(const SampleSet& s) {
  std::vector<StackedRow> rows;
  rows.reserve(s.convenience.size() + s.reference.size());
  for (std::size_t id : s.convenience) rows.push_back({id, true});
  for (std::size_t id : s.reference) rows.push_back({id, false});
  return rows;
}

}  // namespace npt
