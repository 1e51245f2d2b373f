#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "npthresh/harness.hpp"

using namespace npt;

namespace {

ScenarioConfig tiny_config() {
  ScenarioConfig cfg;
  cfg.population.n_units = 300;
  cfg.population.target_n_reference = 30;
  cfg.population.target_n_convenience = 60.0;
  cfg.propensity.draws = 50;
  cfg.gamma_list = {0.05, 0.1};
  cfg.iterations = 3;
  cfg.seed = 777;
  return cfg;
}

}  // namespace

TEST_CASE("aggregate metrics: hand-checked values", "[harness]") {
  const Metrics m = aggregate_metrics({0.0, 0.0, 3.0, -3.0}, {1, 1, 0, 0});
  CHECK(m.bias == 0.0);
  CHECK(m.rmse == Catch::Approx(std::sqrt(4.5)).epsilon(1e-15));
  CHECK(m.mad == Catch::Approx(1.5));
  CHECK(m.coverage == 0.5);
  CHECK_THROWS(aggregate_metrics({}, {}));
  CHECK_THROWS(aggregate_metrics({1.0}, {1, 0}));
}

TEST_CASE("percentile ranks give ties a midrank", "[harness]") {
  const auto pct = detail::percentile_ranks({10.0, 20.0, 20.0, 30.0});
  CHECK(pct[0] == Catch::Approx(12.5));
  CHECK(pct[1] == Catch::Approx(50.0));
  CHECK(pct[2] == Catch::Approx(50.0));
  CHECK(pct[3] == Catch::Approx(87.5));
}

TEST_CASE("seed derivation separates streams", "[harness]") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t salt : {kSaltPopulation, kSaltReference, kSaltConvenience, kSaltMcmc}) {
    for (std::uint64_t m = 0; m < 50; ++m) seen.insert(derive_seed(777, salt, m));
  }
  CHECK(seen.size() == 200);
}

TEST_CASE("scenario run: shape, coverage flags, and aggregates", "[harness]") {
  const auto cfg = tiny_config();
  const auto result = run_scenario(cfg);

  // 3 unthresholded rows + 4 thresholded variants x 2 gammas, per iteration
  CHECK(result.iterations.size() == 3 * 11);
  CHECK(result.overlap.size() == 3);
  CHECK(result.aggregate.size() == 11);

  for (const auto& row : result.iterations) {
    CHECK(row.covered == (row.ci_lo <= row.mu_true && row.mu_true <= row.ci_hi));
    CHECK(row.ci_lo <= row.ci_hi);
    CHECK(row.mu_hat > 0.0);  // outcomes are positive
    if (!variant_is_thresholded(row.variant)) {
      CHECK(row.gamma == 0.0);
    } else {
      CHECK((row.gamma == 0.05 || row.gamma == 0.1));
    }
    if (row.variant == EstimatorVariant::ReferenceSampleOnly) CHECK(row.mean_retained == 0.0);
  }

  // aggregates recompute from the iteration rows
  for (const auto& agg : result.aggregate) {
    std::vector<double> errors;
    std::vector<char> covered;
    for (const auto& row : result.iterations) {
      if (row.variant == agg.variant && row.gamma == agg.gamma) {
        errors.push_back(row.mu_hat - row.mu_true);
        covered.push_back(row.covered ? 1 : 0);
      }
    }
    REQUIRE(agg.iterations == errors.size());
    REQUIRE(agg.iterations == 3);
    const auto m = aggregate_metrics(errors, covered);
    CHECK(agg.bias == Catch::Approx(m.bias));
    CHECK(agg.rmse == Catch::Approx(m.rmse));
    CHECK(agg.mad == Catch::Approx(m.mad));
    CHECK(agg.coverage == m.coverage);
  }

  // uncertainty rows: first-iteration convenience take x 3 statistics x 2 gammas
  const auto n_conv1 = result.overlap[0].n_convenience;
  CHECK(result.uncertainty.size() == n_conv1 * 3 * 2);
  for (const auto& u : result.uncertainty) {
    // the mean of per-draw ranks is not bracketed by the rank quantiles
    // (a heavy one-sided tail pulls it past them), so only check the band
    CHECK(u.pct_lo <= u.pct_hi);
    CHECK(u.pct_lo >= 0.0);
    CHECK(u.pct_hi <= 100.0);
    CHECK(u.pct_mean >= 0.0);
    CHECK(u.pct_mean <= 100.0);
    CHECK(u.switch_fraction >= 0.0);
    CHECK(u.switch_fraction <= 0.5);
  }
}

TEST_CASE("scenario runs are deterministic and thread-count invariant", "[harness]") {
  auto cfg = tiny_config();
  const auto a = run_scenario(cfg);
  const auto b = run_scenario(cfg);
  REQUIRE(a.iterations.size() == b.iterations.size());
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    CHECK(a.iterations[i].mu_hat == b.iterations[i].mu_hat);
    CHECK(a.iterations[i].ci_lo == b.iterations[i].ci_lo);
    CHECK(a.iterations[i].ci_hi == b.iterations[i].ci_hi);
  }

  cfg.jobs = 4;
  const auto c = run_scenario(cfg);
  REQUIRE(c.iterations.size() == a.iterations.size());
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    CHECK(a.iterations[i].mu_hat == c.iterations[i].mu_hat);
    CHECK(a.iterations[i].overlap_pct == c.iterations[i].overlap_pct);
  }
  REQUIRE(c.overlap.size() == a.overlap.size());
  for (std::size_t i = 0; i < a.overlap.size(); ++i) {
    CHECK(a.overlap[i].overlap_pct == c.overlap[i].overlap_pct);
  }
}

TEST_CASE("high and low overlap modes share the population streams", "[harness]") {
  auto cfg = tiny_config();
  cfg.variants = {EstimatorVariant::TrueWeights};
  cfg.population.mode = OverlapMode::High;
  const auto hi = run_scenario(cfg);
  cfg.population.mode = OverlapMode::Low;
  const auto lo = run_scenario(cfg);
  REQUIRE(hi.iterations.size() == lo.iterations.size());
  for (std::size_t i = 0; i < hi.iterations.size(); ++i) {
    CHECK(hi.iterations[i].mu_true == lo.iterations[i].mu_true);
  }
  CHECK(hi.mode == OverlapMode::High);
  CHECK(lo.mode == OverlapMode::Low);
}

TEST_CASE("variants without a model skip the fit", "[harness]") {
  auto cfg = tiny_config();
  cfg.variants = {EstimatorVariant::TrueWeights, EstimatorVariant::ReferenceSampleOnly};
  cfg.propensity.max_iter = 1;  // would throw if a fit were attempted
  const auto result = run_scenario(cfg);
  CHECK(result.iterations.size() == 3 * 2);
  CHECK(result.uncertainty.empty());
  for (const auto& row : result.iterations) {
    CHECK(row.ci_lo == row.mu_hat);  // single-draw summaries are degenerate
    CHECK(row.ci_hi == row.mu_hat);
  }
}

TEST_CASE("scenario config validation", "[harness]") {
  auto cfg = tiny_config();
  cfg.iterations = 0;
  CHECK_THROWS_AS(run_scenario(cfg), config_error);
  cfg = tiny_config();
  cfg.variants.clear();
  CHECK_THROWS_AS(run_scenario(cfg), config_error);
  cfg = tiny_config();
  cfg.gamma_list = {0.7};
  CHECK_THROWS_AS(run_scenario(cfg), config_error);
}
