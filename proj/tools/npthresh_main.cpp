// npthresh: batch CLI for combined probability/nonprobability survey
// estimation with variance-optimal thresholding of the convenience arm.
//
// Subcommands: simulate, fit, threshold, estimate, run, oracle. Every
// subcommand resolves its configuration from --config (flat key = value file,
// or a manifest.json from a previous run), applies flag overrides, and writes
// a manifest.json + resolved.cfg next to its outputs so any run can be
// replayed exactly. Exit codes: 0 success, 1 runtime failure, 2 usage or
// config error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <system_error>
#include <vector>

#include "npthresh/config.hpp"
#include "npthresh/errors.hpp"
#include "npthresh/estimator.hpp"
#include "npthresh/format.hpp"
#include "npthresh/harness.hpp"
#include "npthresh/oracle.hpp"
#include "npthresh/popgen.hpp"
#include "npthresh/propensity.hpp"
#include "npthresh/report.hpp"
#include "npthresh/rng.hpp"
#include "npthresh/sampler.hpp"
#include "npthresh/svg_report.hpp"
#include "npthresh/threshold.hpp"

namespace fs = std::filesystem;
using namespace npt;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  bool plots = false;
  bool dry_run = false;
  // flag overrides, applied on top of the config file
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> jobs;
  std::optional<std::uint64_t> iterations;
  std::optional<std::uint64_t> draws;
  std::string backend;
  std::string overlap;  // H, L, or (run only) both
  std::string variants;
  std::string gamma_list;
};

std::string default_out_dir() {
  if (const char* env = std::getenv("NPTHRESH_OUT"); env && *env) return env;
  return "npthresh_out";
}

void add_common_flags(CLI::App* cmd, CommonOpts& opts, bool allow_both_modes) {
  cmd->add_option("-c,--config", opts.config_path,
                  "config file (key = value) or manifest.json of a previous run");
  cmd->add_option("-o,--out", opts.out_dir, "output directory (env NPTHRESH_OUT)");
  cmd->add_option("--seed", opts.seed, "override the base seed");
  cmd->add_option("--jobs", opts.jobs, "worker threads, 0 = all cores");
  cmd->add_option("--iterations", opts.iterations, "override the iteration count");
  cmd->add_option("--draws", opts.draws, "override the propensity draw count");
  cmd->add_option("--backend", opts.backend, "propensity backend: mcmc or mle")
      ->check(CLI::IsMember({"mcmc", "mle"}));
  cmd->add_option("--variants", opts.variants, "comma-separated estimator variants");
  cmd->add_option("--gamma-list", opts.gamma_list, "comma-separated percentile levels");
  auto* ov = cmd->add_option("--overlap", opts.overlap, "overlap mode: H or L");
  if (allow_both_modes) {
    ov->description("overlap mode: H, L, or both")->check(CLI::IsMember({"H", "L", "both"}));
  } else {
    ov->check(CLI::IsMember({"H", "L"}));
  }
  cmd->add_flag("--plots", opts.plots, "also emit SVG charts");
  cmd->add_flag("--dry-run", opts.dry_run, "print the resolved config and write nothing");
}

std::map<std::string, std::string> resolve_config_map(const CommonOpts& opts,
                                                      const std::string& overlap_mode) {
  std::map<std::string, std::string> kv;
  if (!opts.config_path.empty()) {
    if (opts.config_path.size() > 5 &&
        opts.config_path.substr(opts.config_path.size() - 5) == ".json") {
      kv = read_manifest(opts.config_path).resolved_config;
    } else {
      kv = parse_config_file(opts.config_path);
    }
  }
  if (opts.seed) kv["seed"] = std::to_string(*opts.seed);
  if (opts.jobs) kv["jobs"] = std::to_string(*opts.jobs);
  if (opts.iterations) kv["iterations"] = std::to_string(*opts.iterations);
  if (opts.draws) kv["draws"] = std::to_string(*opts.draws);
  if (!opts.backend.empty()) kv["backend"] = opts.backend;
  if (!opts.variants.empty()) kv["variants"] = opts.variants;
  if (!opts.gamma_list.empty()) kv["gamma_list"] = opts.gamma_list;
  if (!overlap_mode.empty()) kv["overlap_mode"] = overlap_mode;
  return kv;
}

/** Files created by the current subcommand; removed wholesale on failure. */
class OutputTracker {
 public:
  std::string claim(const fs::path& p) {
    files_.push_back(p);
    return p.string();
  }
  void commit() { files_.clear(); }
  ~OutputTracker() {
    std::error_code ec;
    for (const auto& p : files_) fs::remove(p, ec);
  }

 private:
  std::vector<fs::path> files_;
};

void write_run_metadata(OutputTracker& track, const fs::path& dir, const CommonOpts& opts,
                        const ScenarioConfig& cfg) {
  RunManifest m;
  m.config_path = opts.config_path;
  m.resolved_config = to_config_map(cfg);
  m.seed = cfg.seed;
  m.output_dir = dir.string();
  write_manifest(track.claim(dir / "manifest.json"), m);
  std::ofstream out(track.claim(dir / "resolved.cfg"), std::ios::binary);
  out << serialize_config(m.resolved_config);
}

/** Resolve, honor --dry-run, create the output dir. Returns false on dry-run. */
bool prepare(const CommonOpts& opts, ScenarioConfig& cfg, fs::path& dir) {
  cfg = scenario_from_config(resolve_config_map(opts, opts.overlap));
  if (opts.dry_run) {
    std::cout << serialize_config(to_config_map(cfg));
    return false;
  }
  dir = opts.out_dir.empty() ? fs::path(default_out_dir()) : fs::path(opts.out_dir);
  fs::create_directories(dir);
  return true;
}

// population and samples for the subcommands that act on one realized data set
struct SingleDraw {
  Population pop;
  SampleSet sample;
};

SingleDraw realize_first_iteration(const ScenarioConfig& cfg) {
  SingleDraw d;
  PopulationConfig pop_cfg = cfg.population;
  pop_cfg.seed = derive_seed(cfg.seed, kSaltPopulation, 0);
  d.pop = generate_population(pop_cfg);
  Rng ref_rng(derive_seed(cfg.seed, kSaltReference, 0));
  Rng conv_rng(derive_seed(cfg.seed, kSaltConvenience, 0));
  d.sample = draw_samples(d.pop, pop_cfg.target_n_reference, ref_rng, conv_rng,
                          cfg.overlap_denominator);
  return d;
}

int cmd_simulate(const CommonOpts& opts) {
  ScenarioConfig cfg;
  fs::path dir;
  if (!prepare(opts, cfg, dir)) return 0;
  OutputTracker track;

  const SingleDraw d = realize_first_iteration(cfg);
  const std::string hash = config_hash_hex(cfg);

  {
    std::string header = "unit,y,size_r,pi_r_true,pi_c_true";
    for (std::size_t j = 1; j <= d.pop.n_covariates(); ++j) header += ",x" + std::to_string(j);
    auto out = detail::open_report(track.claim(dir / "frame.csv"), hash, cfg.seed, header);
    for (std::size_t i = 0; i < d.pop.n(); ++i) {
      out << i << ',' << format_double(d.pop.y[i]) << ',' << format_double(d.pop.size_r[i])
          << ',' << format_double(d.pop.pi_r_true[i]) << ','
          << format_double(d.pop.pi_c_true[i]);
      for (double xv : d.pop.x[i]) out << ',' << format_double(xv);
      out << "\n";
    }
  }
  {
    auto out = detail::open_report(track.claim(dir / "sample_stacked.csv"), hash, cfg.seed,
                                   "row,unit,arm,y,pi_true");
    const auto rows = stack_samples(d.sample);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto unit = rows[r].unit;
      out << r << ',' << unit << ',' << (rows[r].in_convenience ? "convenience" : "reference")
          << ',' << format_double(d.pop.y[unit]) << ','
          << format_double(rows[r].in_convenience ? d.pop.pi_c_true[unit]
                                                  : d.pop.pi_r_true[unit])
          << "\n";
    }
  }
  write_run_metadata(track, dir, opts, cfg);
  track.commit();
  std::cout << "simulate: wrote frame.csv (" << cfg.population.n_units
            << " units) and sample_stacked.csv to " << dir.string() << "\n";
  return 0;
}

PropensityDraws fit_first_iteration(const ScenarioConfig& cfg, const SingleDraw& d) {
  PropensityConfig prop_cfg = cfg.propensity;
  prop_cfg.seed = derive_seed(cfg.seed, kSaltMcmc, 0);
  return fit_propensity(d.pop, d.sample, prop_cfg);
}

int cmd_fit(const CommonOpts& opts) {
  ScenarioConfig cfg;
  fs::path dir;
  if (!prepare(opts, cfg, dir)) return 0;
  OutputTracker track;

  const SingleDraw d = realize_first_iteration(cfg);
  const PropensityDraws draws = fit_first_iteration(cfg, d);
  const std::string hash = config_hash_hex(cfg);
  const std::size_t k1 = d.pop.n_covariates() + 1;

  {
    std::string header = "draw";
    for (std::size_t j = 0; j < k1; ++j) header += ",b_c" + std::to_string(j);
    for (std::size_t j = 0; j < k1; ++j) header += ",b_r" + std::to_string(j);
    auto out = detail::open_report(track.claim(dir / "coefficients.csv"), hash, cfg.seed, header);
    for (std::size_t s = 0; s < draws.n_draws; ++s) {
      out << (s + 1);
      for (double v : draws.coef[s]) out << ',' << format_double(v);
      out << "\n";
    }
  }
  {
    auto out = detail::open_report(track.claim(dir / "fit_diagnostics.csv"), hash, cfg.seed,
                                   "key,value");
    const auto& diag = draws.diagnostics;
    out << "backend," << (cfg.propensity.backend == PropensityBackend::Mcmc ? "mcmc" : "mle")
        << "\n";
    out << "draws," << draws.n_draws << "\n";
    out << "converged," << (diag.converged ? 1 : 0) << "\n";
    out << "iterations," << diag.iterations << "\n";
    out << "grad_max_norm," << format_double(diag.grad_max_norm) << "\n";
    out << "acceptance_rate," << format_double(diag.acceptance_rate) << "\n";
    out << "n_convenience," << d.sample.convenience.size() << "\n";
    out << "n_reference," << d.sample.reference.size() << "\n";
    for (const auto& w : diag.warnings) out << "warning," << w << "\n";
  }
  write_run_metadata(track, dir, opts, cfg);
  track.commit();
  std::cout << "fit: wrote coefficients.csv (" << draws.n_draws << " draws) to " << dir.string()
            << "\n";
  return 0;
}

std::vector<ThresholdStatistic> statistics_for(const ScenarioConfig& cfg) {
  std::vector<ThresholdStatistic> stats;
  const auto add = [&](ThresholdStatistic s) {
    if (std::find(stats.begin(), stats.end(), s) == stats.end()) stats.push_back(s);
  };
  for (EstimatorVariant v : cfg.variants) {
    if (v == EstimatorVariant::BalancedSoft || v == EstimatorVariant::BalancedHardTwoStep) {
      add(ThresholdStatistic::Balanced);
    } else if (v == EstimatorVariant::ReferenceOnlyStat) {
      add(ThresholdStatistic::ReferenceOnly);
    } else if (v == EstimatorVariant::RatioStat) {
      add(ThresholdStatistic::Ratio);
    }
  }
  if (stats.empty()) stats.push_back(ThresholdStatistic::Balanced);
  return stats;
}

int cmd_threshold(const CommonOpts& opts) {
  ScenarioConfig cfg;
  fs::path dir;
  if (!prepare(opts, cfg, dir)) return 0;
  OutputTracker track;

  const SingleDraw d = realize_first_iteration(cfg);
  const PropensityDraws draws = fit_first_iteration(cfg, d);
  const std::string hash = config_hash_hex(cfg);
  const auto stats = statistics_for(cfg);

  {
    auto out = detail::open_report(track.claim(dir / "thresholds.csv"), hash, cfg.seed,
                                   "draw,statistic,rule,gamma,alpha,n_retained");
    ThresholdSpec spec;
    for (ThresholdStatistic s : stats) {
      spec.statistic = s;
      spec.cutoff = CutoffRule::Percentile;
      for (double gamma : cfg.gamma_list) {
        spec.gamma = gamma;
        const AcceptanceSets sets = build_acceptance_sets(draws, spec);
        for (std::size_t k = 0; k < sets.n_draws; ++k) {
          out << (k + 1) << ',' << to_string(s) << ",percentile," << format_double(gamma) << ','
              << format_double(sets.alpha[k]) << ',' << sets.retained_count[k] << "\n";
        }
      }
      if (s == ThresholdStatistic::OneArmPiC || s == ThresholdStatistic::Balanced) {
        spec.cutoff = CutoffRule::FixedPoint;
        const AcceptanceSets sets = build_acceptance_sets(draws, spec);
        for (std::size_t k = 0; k < sets.n_draws; ++k) {
          out << (k + 1) << ',' << to_string(s) << ",fixed_point,0,"
              << format_double(sets.alpha[k]) << ',' << sets.retained_count[k] << "\n";
        }
      }
    }
  }
  {
    ScenarioResult partial;
    for (ThresholdStatistic s : stats) {
      for (double gamma : cfg.gamma_list) {
        const auto rows = detail::uncertainty_rows(d.sample, draws, s, gamma);
        partial.uncertainty.insert(partial.uncertainty.end(), rows.begin(), rows.end());
      }
    }
    write_uncertainty_csv(track.claim(dir / "threshold_uncertainty.csv"), partial, hash,
                          cfg.seed);
  }
  write_run_metadata(track, dir, opts, cfg);
  track.commit();
  std::cout << "threshold: wrote thresholds.csv and threshold_uncertainty.csv to "
            << dir.string() << "\n";
  return 0;
}

int cmd_estimate(const CommonOpts& opts) {
  ScenarioConfig cfg;
  fs::path dir;
  if (!prepare(opts, cfg, dir)) return 0;
  OutputTracker track;

  ScenarioConfig one = cfg;
  one.iterations = 1;
  const ScenarioResult result = run_scenario(one);
  const std::string hash = config_hash_hex(cfg);

  auto out = detail::open_report(
      track.claim(dir / "estimates.csv"), hash, cfg.seed,
      "variant,gamma,mu_hat,ci_lo,ci_hi,mu_true,covered,mean_retained");
  for (const auto& row : result.iterations) {
    out << to_string(row.variant) << ',' << format_double(row.gamma) << ','
        << format_double(row.mu_hat) << ',' << format_double(row.ci_lo) << ','
        << format_double(row.ci_hi) << ',' << format_double(row.mu_true) << ','
        << (row.covered ? 1 : 0) << ',' << format_double(row.mean_retained) << "\n";
  }
  write_run_metadata(track, dir, opts, cfg);
  track.commit();
  std::cout << "estimate: wrote estimates.csv (" << result.iterations.size() << " rows) to "
            << dir.string() << "\n";
  return 0;
}

void write_mode_reports(OutputTracker& track, const fs::path& dir, const CommonOpts& opts,
                        const ScenarioConfig& cfg) {
  const ScenarioResult result = run_scenario(cfg);
  const std::string hash = config_hash_hex(cfg);
  write_iterations_csv(track.claim(dir / "report_iterations.csv"), result, hash, cfg.seed);
  write_aggregate_csv(track.claim(dir / "report_aggregate.csv"), result, hash, cfg.seed);
  write_overlap_csv(track.claim(dir / "overlap.csv"), result, hash, cfg.seed);
  write_uncertainty_csv(track.claim(dir / "threshold_uncertainty.csv"), result, hash, cfg.seed);
  if (opts.plots) {
    std::vector<double> overlaps;
    for (const auto& row : result.overlap) overlaps.push_back(row.overlap_pct);
    write_overlap_violin_svg(track.claim(dir / "overlap_violin.svg"),
                             {{to_string(cfg.population.mode), overlaps}});
    write_aggregate_bars_svg(track.claim(dir / "aggregate_rmse.svg"), result.aggregate);
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  write_run_metadata(track, dir, opts, cfg);
}

int cmd_run(const CommonOpts& opts) {
  const bool both = opts.overlap == "both";
  CommonOpts base = opts;
  if (both) base.overlap.clear();

  ScenarioConfig cfg = scenario_from_config(resolve_config_map(base, base.overlap));
  if (opts.dry_run) {
    if (both) {
      for (const char* mode : {"H", "L"}) {
        auto kv = to_config_map(cfg);
        kv["overlap_mode"] = mode;
        std::cout << serialize_config(kv);
      }
    } else {
      std::cout << serialize_config(to_config_map(cfg));
    }
    return 0;
  }
  const fs::path dir = opts.out_dir.empty() ? fs::path(default_out_dir()) : fs::path(opts.out_dir);
  OutputTracker track;
  if (both) {
    for (const char* mode : {"H", "L"}) {
      ScenarioConfig mode_cfg = cfg;
      mode_cfg.population.mode = mode_from_string(mode);
      const fs::path sub = dir / mode;
      fs::create_directories(sub);
      write_mode_reports(track, sub, opts, mode_cfg);
      std::cout << "run[" << mode << "]: reports written to " << sub.string() << "\n";
    }
  } else {
    fs::create_directories(dir);
    write_mode_reports(track, dir, opts, cfg);
    std::cout << "run: reports written to " << dir.string() << "\n";
  }
  track.commit();
  return 0;
}

int cmd_oracle(const CommonOpts& opts, std::uint64_t n, double sigma2) {
  ScenarioConfig cfg;
  fs::path dir;
  if (!prepare(opts, cfg, dir)) return 0;
  OutputTracker track;
  if (n == 0) throw config_error("oracle: --n must be positive");
  if (!(sigma2 > 0.0)) throw config_error("oracle: --sigma2 must be positive");

  Rng rng = stream_for(cfg.seed, StreamTag::oracle);
  std::vector<double> props(n);
  for (auto& p : props) p = rng.beta12();
  const VarianceCurve curve = variance_curve(props, sigma2);
  write_variance_curve_csv(track.claim(dir / "variance_curve.csv"), curve,
                           config_hash_hex(cfg), cfg.seed);
  write_run_metadata(track, dir, opts, cfg);
  track.commit();

  const double at_cutoff = variance_at_cutoff(props, sigma2, curve.cutoff);
  std::cout << "oracle: n=" << n << " cutoff=" << format_double(curve.cutoff)
            << " grid_argmin=" << format_double(curve.argmin_eps)
            << " var_at_cutoff=" << format_double(at_cutoff) << "\n"
            << "oracle: wrote variance_curve.csv to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"combined-sample survey estimation with propensity thresholding"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonOpts sim_opts, fit_opts, thr_opts, est_opts, run_opts, orc_opts;
  std::uint64_t oracle_n = 1400;
  double oracle_sigma2 = 1.0;

  add_common_flags(app.add_subcommand("simulate", "generate a frame and one stacked sample"),
                   sim_opts, false);
  add_common_flags(app.add_subcommand("fit", "fit the membership model on one sample"),
                   fit_opts, false);
  add_common_flags(app.add_subcommand("threshold", "cutoffs and acceptance diagnostics"),
                   thr_opts, false);
  add_common_flags(app.add_subcommand("estimate", "single-iteration estimates"),
                   est_opts, false);
  add_common_flags(app.add_subcommand("run", "full Monte Carlo study"), run_opts, true);
  auto* orc = app.add_subcommand("oracle", "trimmed-variance curve on a synthetic sample");
  add_common_flags(orc, orc_opts, false);
  orc->add_option("--n", oracle_n, "number of synthetic propensities (Beta(1,2))");
  orc->add_option("--sigma2", oracle_sigma2, "outcome variance scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit 0, usage errors exit 2
  }

  try {
    if (app.got_subcommand("simulate")) return cmd_simulate(sim_opts);
    if (app.got_subcommand("fit")) return cmd_fit(fit_opts);
    if (app.got_subcommand("threshold")) return cmd_threshold(thr_opts);
    if (app.got_subcommand("estimate")) return cmd_estimate(est_opts);
    if (app.got_subcommand("run")) return cmd_run(run_opts);
    if (app.got_subcommand("oracle")) return cmd_oracle(orc_opts, oracle_n, oracle_sigma2);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
