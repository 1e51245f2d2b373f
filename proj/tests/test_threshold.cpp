#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "npthresh/errors.hpp"
#include "npthresh/rng.hpp"
#include "npthresh/threshold.hpp"

using namespace npt;

TEST_CASE("statistic values", "[threshold]") {
  // balanced(0.1, 0.4): sqrt(0.1*0.4/0.5) = sqrt(0.08)
  CHECK(statistic_value(ThresholdStatistic::Balanced, 0.1, 0.4) ==
        Catch::Approx(0.282842712474619).epsilon(1e-14));
  // argument order is (pi_c, pi_r)
  CHECK(statistic_value(ThresholdStatistic::OneArmPiC, 0.1, 0.4) == 0.1);
  CHECK(statistic_value(ThresholdStatistic::ReferenceOnly, 0.1, 0.4) == 0.4);
  CHECK(statistic_value(ThresholdStatistic::Ratio, 0.1, 0.4) == Catch::Approx(4.0));
}

TEST_CASE("balanced statistic squares to the harmonic form", "[threshold]") {
  Rng rng(911);
  for (int i = 0; i < 10000; ++i) {
    const double pr = rng.uniform01_open_low();
    const double pc = rng.uniform01_open_low();
    const double b = statistic_value(ThresholdStatistic::Balanced, pr, pc);
    const double want = pr * pc / (pr + pc);
    CHECK(std::abs(b * b - want) <= 1e-12 * want);
  }
}

TEST_CASE("one-arm fixed point on flat propensities", "[threshold]") {
  // all pi = 0.4: 1/alpha = 2 * mean(1/pi) = 5 at any retained prefix,
  // so alpha = 0.2 and nothing is trimmed.
  std::vector<double> pi(7, 0.4);
  const auto r = solve_fixed_point_one_arm(pi);
  CHECK(r.alpha == Catch::Approx(0.2).margin(1e-15));
  CHECK(r.n_retained == 7);
  CHECK(r.self_consistent);
}

TEST_CASE("one-arm fixed point keeps both of {0.5, 0.25}", "[threshold]") {
  // full set: 1/alpha = 2*(2+4)/2 = 6, alpha = 1/6 < 0.25, consistent.
  std::vector<double> pi{0.5, 0.25};
  const auto r = solve_fixed_point_one_arm(pi);
  CHECK(r.alpha == Catch::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(r.n_retained == 2);
  CHECK(r.self_consistent);
}

TEST_CASE("one-arm fixed point residual is numerically zero", "[threshold]") {
  Rng rng(4021);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 10 + rng.below(400);
    std::vector<double> pi(n);
    for (auto& p : pi) p = rep % 2 == 0 ? rng.uniform01_open_low() : rng.beta12();
    const auto r = solve_fixed_point_one_arm(pi);
    REQUIRE(r.self_consistent);
    double inv_sum = 0.0;
    std::size_t kept = 0;
    for (double p : pi) {
      if (p > r.alpha) {
        inv_sum += 1.0 / p;
        ++kept;
      }
    }
    REQUIRE(kept == r.n_retained);
    CHECK(std::abs(1.0 / r.alpha - 2.0 * inv_sum / kept) < 1e-10);
  }
}

TEST_CASE("two-arm fixed point on a single unit", "[threshold]") {
  // u = 1/0.5 + 1/0.5 = 4: 1/alpha^2 = 2*4 = 8, alpha = 1/(2*sqrt(2)).
  const auto r = solve_fixed_point_two_arm({0.5}, {0.5});
  CHECK(r.alpha == Catch::Approx(std::sqrt(0.125)).epsilon(1e-14));
  CHECK(r.n_retained == 1);
  CHECK(r.self_consistent);
}

TEST_CASE("two-arm fixed point trims the noisy unit", "[threshold]") {
  // u values {4, 20}: keeping both needs 1/alpha^2 = 24 but u=20 <= 24 holds,
  // while the k=1 prefix (q=8) has the smaller trimmed objective, so the
  // noisy unit goes.
  const auto r = solve_fixed_point_two_arm({0.5, 0.1}, {0.5, 0.1});
  CHECK(r.alpha == Catch::Approx(std::sqrt(0.125)).epsilon(1e-14));
  CHECK(r.n_retained == 1);
  CHECK(r.self_consistent);
}

TEST_CASE("two-arm fixed point residual is numerically zero", "[threshold]") {
  Rng rng(4022);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 10 + rng.below(400);
    std::vector<double> pr(n), pc(n);
    for (std::size_t i = 0; i < n; ++i) {
      pr[i] = rng.uniform01_open_low();
      pc[i] = rep % 2 == 0 ? rng.uniform01_open_low() : rng.beta12();
    }
    const auto r = solve_fixed_point_two_arm(pr, pc);
    REQUIRE(r.self_consistent);
    double u_sum = 0.0;
    std::size_t kept = 0;
    const double q = 1.0 / (r.alpha * r.alpha);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = 1.0 / pr[i] + 1.0 / pc[i];
      if (u <= q) {
        u_sum += u;
        ++kept;
      }
    }
    REQUIRE(kept == r.n_retained);
    CHECK(std::abs(q - 2.0 * u_sum / kept) < 1e-10);
  }
}

TEST_CASE("percentile cutoff uses nearest-rank quantiles", "[threshold]") {
  std::vector<double> v(20);
  for (int i = 0; i < 20; ++i) v[i] = i + 1.0;
  // rank ceil(0.05*20) = 1, so the cutoff is the minimum and exactly the
  // minimum itself fails the strict comparison.
  CHECK(percentile_cutoff(v, 0.05) == 1.0);
  CHECK(percentile_cutoff(v, 0.5) == 10.0);
  std::size_t kept = 0;
  for (double s : v) kept += s > 1.0 ? 1 : 0;
  CHECK(kept == 19);
}

TEST_CASE("threshold spec validation", "[threshold]") {
  ThresholdSpec spec;
  spec.gamma = 0.0;
  CHECK_THROWS_AS(spec.validate(), config_error);
  spec.gamma = 0.51;
  CHECK_THROWS_AS(spec.validate(), config_error);
  spec.gamma = 0.5;
  CHECK_NOTHROW(spec.validate());
  spec.cutoff = CutoffRule::FixedPoint;
  spec.statistic = ThresholdStatistic::Ratio;
  CHECK_THROWS_AS(spec.validate(), config_error);
  spec.statistic = ThresholdStatistic::Balanced;
  CHECK_NOTHROW(spec.validate());
}

namespace {

// Hand-built draws: 2 units, n_draws draws of (pi_r, pi_c) per unit. With the
// one-arm statistic and gamma = 0.5 the cutoff is the smaller pi_c, so exactly
// the unit with the larger pi_c is retained in each draw.
PropensityDraws make_draws(std::size_t n_draws, std::size_t n_flipped) {
  PropensityDraws d;
  d.n_draws = n_draws;
  d.coef.assign(n_draws, {});
  d.conv_pi_c.assign(n_draws, std::vector<double>(2));
  d.conv_pi_r.assign(n_draws, std::vector<double>(2, 0.5));
  d.ref_pi_r.assign(n_draws, {});
  for (std::size_t s = 0; s < n_draws; ++s) {
    const bool flip = s < n_flipped;
    d.conv_pi_c[s][0] = flip ? 0.7 : 0.3;
    d.conv_pi_c[s][1] = flip ? 0.3 : 0.7;
  }
  return d;
}

}  // namespace

TEST_CASE("acceptance sets: soft retention and switch fractions", "[threshold]") {
  const auto draws = make_draws(700, 100);
  ThresholdSpec spec;
  spec.statistic = ThresholdStatistic::OneArmPiC;
  spec.cutoff = CutoffRule::Percentile;
  spec.gamma = 0.5;
  const auto sets = build_acceptance_sets(draws, spec);
  REQUIRE(sets.n_draws == 700);
  REQUIRE(sets.n_units == 2);
  // unit 1 is in for 600 of 700 draws; the switch fraction counts the
  // minority side for both units.
  std::size_t in1 = 0;
  for (std::size_t s = 0; s < 700; ++s) {
    CHECK(sets.accept[s][0] != sets.accept[s][1]);
    in1 += sets.accept[s][1] ? 1 : 0;
  }
  CHECK(in1 == 600);
  CHECK(sets.switch_fraction[0] == Catch::Approx(100.0 / 700.0));
  CHECK(sets.switch_fraction[1] == Catch::Approx(100.0 / 700.0));
  CHECK(sets.degenerate_draws == 0);
  for (std::size_t s = 0; s < 700; ++s) CHECK(sets.retained_count[s] == 1);
}

TEST_CASE("acceptance sets: hard rule votes by majority", "[threshold]") {
  const auto draws = make_draws(700, 100);
  ThresholdSpec spec;
  spec.statistic = ThresholdStatistic::OneArmPiC;
  spec.cutoff = CutoffRule::Percentile;
  spec.gamma = 0.5;
  spec.hard = true;
  const auto sets = build_acceptance_sets(draws, spec);
  for (std::size_t s = 0; s < 700; ++s) {
    CHECK_FALSE(sets.accept[s][0]);  // in 100 <= 350 draws
    CHECK(sets.accept[s][1]);        // in 600 > 350 draws
  }
  // switch fractions still describe the underlying soft sets
  CHECK(sets.switch_fraction[0] == Catch::Approx(100.0 / 700.0));
}

TEST_CASE("acceptance sets: exact tie excludes under the hard rule", "[threshold]") {
  const auto draws = make_draws(2, 1);
  ThresholdSpec spec;
  spec.statistic = ThresholdStatistic::OneArmPiC;
  spec.cutoff = CutoffRule::Percentile;
  spec.gamma = 0.5;
  spec.hard = true;
  const auto sets = build_acceptance_sets(draws, spec);
  // each unit is in exactly 1 of 2 soft sets: 2*1 == 2 is not > 2
  CHECK_FALSE(sets.accept[0][0]);
  CHECK_FALSE(sets.accept[0][1]);
}

TEST_CASE("acceptance sets: degenerate equal draws retain everything", "[threshold]") {
  PropensityDraws d;
  d.n_draws = 3;
  d.coef.assign(3, {});
  d.conv_pi_c.assign(3, std::vector<double>(4, 0.2));
  d.conv_pi_r.assign(3, std::vector<double>(4, 0.5));
  d.ref_pi_r.assign(3, {});
  ThresholdSpec spec;
  spec.statistic = ThresholdStatistic::OneArmPiC;
  spec.gamma = 0.05;
  const auto sets = build_acceptance_sets(d, spec);
  CHECK(sets.degenerate_draws == 3);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(sets.retained_count[s] == 4);
    for (bool in : sets.accept[s]) CHECK(in);
  }
}

TEST_CASE("acceptance sets: fixed-point rule matches the direct solvers", "[threshold]") {
  Rng rng(515);
  PropensityDraws d;
  d.n_draws = 5;
  d.coef.assign(5, {});
  d.conv_pi_c.assign(5, std::vector<double>(60));
  d.conv_pi_r.assign(5, std::vector<double>(60));
  d.ref_pi_r.assign(5, {});
  for (auto& row : d.conv_pi_c)
    for (auto& p : row) p = rng.beta12();
  for (auto& row : d.conv_pi_r)
    for (auto& p : row) p = rng.uniform01_open_low();

  ThresholdSpec spec;
  spec.cutoff = CutoffRule::FixedPoint;
  spec.statistic = ThresholdStatistic::OneArmPiC;
  auto sets = build_acceptance_sets(d, spec);
  for (std::size_t s = 0; s < 5; ++s) {
    const auto r = solve_fixed_point_one_arm(d.conv_pi_c[s]);
    CHECK(sets.alpha[s] == r.alpha);
    CHECK(sets.retained_count[s] == r.n_retained);
  }

  spec.statistic = ThresholdStatistic::Balanced;
  sets = build_acceptance_sets(d, spec);
  for (std::size_t s = 0; s < 5; ++s) {
    const auto r = solve_fixed_point_two_arm(d.conv_pi_r[s], d.conv_pi_c[s]);
    CHECK(sets.alpha[s] == r.alpha);
    CHECK(sets.retained_count[s] == r.n_retained);
  }
}
