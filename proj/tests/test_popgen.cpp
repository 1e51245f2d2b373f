#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "npthresh/errors.hpp"
#include "npthresh/popgen.hpp"
#include "npthresh/stats.hpp"

using namespace npt;

TEST_CASE("pps probabilities cap at one without redistribution", "[popgen]") {
  // sizes {1,1,2}, take 2: 2*s/4 = {0.5, 0.5, 1.0}
  const auto pi = pps_inclusion_probs({1.0, 1.0, 2.0}, 2);
  REQUIRE(pi.size() == 3);
  CHECK(pi[0] == Catch::Approx(0.5).epsilon(1e-15));
  CHECK(pi[1] == Catch::Approx(0.5).epsilon(1e-15));
  CHECK(pi[2] == 1.0);
  // a dominant size gets capped and the rest keep their raw share
  const auto capped = pps_inclusion_probs({1.0, 1.0, 20.0}, 2);
  CHECK(capped[2] == 1.0);
  CHECK(capped[0] == Catch::Approx(2.0 / 22.0).epsilon(1e-14));
  CHECK(std::accumulate(capped.begin(), capped.end(), 0.0) < 2.0);
  CHECK_THROWS_AS(pps_inclusion_probs({1.0, -1.0}, 1), std::domain_error);
  CHECK_THROWS_AS(pps_inclusion_probs({1.0, 1.0}, 3), std::domain_error);
}

TEST_CASE("offset calibration on a flat predictor", "[popgen]") {
  // 4000 zero predictors, target 800: inv_logit(c) = 0.2, c = log(0.25)
  std::vector<double> lp(4000, 0.0);
  const double c = calibrate_offset(lp, 800.0);
  CHECK(c == Catch::Approx(std::log(0.25)).margin(2e-6));
  double total = 0.0;
  for (double v : lp) total += inv_logit(v + c);
  CHECK(std::abs(total - 800.0) <= 1e-6);
}

TEST_CASE("generated population hits both sampling targets", "[popgen]") {
  PopulationConfig cfg;
  cfg.seed = 31;
  const auto pop = generate_population(cfg);
  REQUIRE(pop.n() == cfg.n_units);
  REQUIRE(pop.n_covariates() == cfg.n_covariates);

  double sum_pi_c = 0.0;
  for (double p : pop.pi_c_true) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    sum_pi_c += p;
  }
  CHECK(std::abs(sum_pi_c - cfg.target_n_convenience) <= 1e-5);

  double sum_pi_r = 0.0;
  bool any_capped = false;
  for (double p : pop.pi_r_true) {
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
    if (p == 1.0) any_capped = true;
    sum_pi_r += p;
  }
  // capping only ever removes mass
  CHECK(sum_pi_r <= cfg.target_n_reference + 1e-9);
  if (!any_capped) {
    CHECK(sum_pi_r == Catch::Approx(static_cast<double>(cfg.target_n_reference)).epsilon(1e-12));
  }
  CHECK(pop.true_mean == Catch::Approx(mean(pop.y)));
}

TEST_CASE("covariates are binary except the last, which is continuous", "[popgen]") {
  PopulationConfig cfg;
  cfg.seed = 32;
  const auto pop = generate_population(cfg);
  bool saw_noninteger_last = false;
  for (std::size_t i = 0; i < pop.n(); ++i) {
    for (std::size_t j = 0; j + 1 < pop.n_covariates(); ++j) {
      CHECK((pop.x[i][j] == 0.0 || pop.x[i][j] == 1.0));
    }
    const double last = pop.x[i][pop.n_covariates() - 1];
    if (last != std::floor(last)) saw_noninteger_last = true;
  }
  CHECK(saw_noninteger_last);
}

TEST_CASE("overlap mode flips only the convenience arm", "[popgen]") {
  PopulationConfig hi;
  hi.seed = 33;
  hi.mode = OverlapMode::High;
  PopulationConfig lo = hi;
  lo.mode = OverlapMode::Low;
  const auto ph = generate_population(hi);
  const auto pl = generate_population(lo);
  REQUIRE(ph.n() == pl.n());
  for (std::size_t i = 0; i < ph.n(); ++i) {
    CHECK(ph.x[i] == pl.x[i]);
    CHECK(ph.y[i] == pl.y[i]);
    CHECK(ph.pi_r_true[i] == pl.pi_r_true[i]);
  }
  std::size_t diff = 0;
  for (std::size_t i = 0; i < ph.n(); ++i) diff += ph.pi_c_true[i] != pl.pi_c_true[i] ? 1 : 0;
  CHECK(diff > ph.n() / 2);
}

TEST_CASE("population generation is reproducible", "[popgen]") {
  PopulationConfig cfg;
  cfg.seed = 34;
  const auto a = generate_population(cfg);
  const auto b = generate_population(cfg);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.pi_c_true == b.pi_c_true);
  CHECK(a.pi_r_true == b.pi_r_true);
  CHECK(a.conv_offset == b.conv_offset);
}

TEST_CASE("population config validation", "[popgen]") {
  PopulationConfig cfg;
  cfg.beta = {0.1, 0.2};  // wrong length for n_covariates = 5
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = PopulationConfig{};
  cfg.n_units = 0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = PopulationConfig{};
  cfg.target_n_reference = cfg.n_units + 1;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = PopulationConfig{};
  cfg.target_n_convenience = 0.0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = PopulationConfig{};
  cfg.log_outcome_variance = -1.0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  CHECK_NOTHROW(PopulationConfig{}.validate());
}
