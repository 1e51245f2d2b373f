#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "npthresh/config.hpp"
#include "npthresh/format.hpp"
#include "npthresh/harness.hpp"
#include "npthresh/oracle.hpp"

namespace npt {

/**
 * Report files share one layout: a metadata comment line carrying the config
 * hash and base seed, a header row, then data rows.
 */
namespace detail {

inline std::ofstream open_report(const std::string& path, const std::string& hash,
                                 std::uint64_t seed, const std::string& header) {
  std::ofstream out(path, std::ios::binary);  // '\n' endings on every platform
  if (!out) throw std::runtime_error("cannot write report file: " + path);
  out << "# config_hash=" << hash << " seed=" << seed << "\n" << header << "\n";
  return out;
}

}  // namespace detail

inline void write_iterations_csv(const std::string& path, const ScenarioResult& r,
                                 const std::string& hash, std::uint64_t seed) {
  auto out = detail::open_report(
      path, hash, seed,
      "iteration,variant,gamma,mu_hat,mu_true,ci_lo,ci_hi,covered,mean_retained,overlap_pct");
  for (const auto& row : r.iterations) {
    out << row.iteration << ',' << to_string(row.variant) << ',' << format_double(row.gamma)
        << ',' << format_double(row.mu_hat) << ',' << format_double(row.mu_true) << ','
        << format_double(row.ci_lo) << ',' << format_double(row.ci_hi) << ','
        << (row.covered ? 1 : 0) << ',' << format_double(row.mean_retained) << ','
        << format_double(row.overlap_pct) << "\n";
  }
}

inline void write_aggregate_csv(const std::string& path, const ScenarioResult& r,
                                const std::string& hash, std::uint64_t seed) {
  auto out = detail::open_report(path, hash, seed,
                                 "variant,gamma,iterations,bias,rmse,mad,coverage");
  for (const auto& row : r.aggregate) {
    out << to_string(row.variant) << ',' << format_double(row.gamma) << ',' << row.iterations
        << ',' << format_double(row.bias) << ',' << format_double(row.rmse) << ','
        << format_double(row.mad) << ',' << format_double(row.coverage) << "\n";
  }
}

inline void write_overlap_csv(const std::string& path, const ScenarioResult& r,
                              const std::string& hash, std::uint64_t seed) {
  auto out = detail::open_report(path, hash, seed,
                                 "iteration,n_reference,n_convenience,overlap_pct");
  for (const auto& row : r.overlap) {
    out << row.iteration << ',' << row.n_reference << ',' << row.n_convenience << ','
        << format_double(row.overlap_pct) << "\n";
  }
}

inline void write_uncertainty_csv(const std::string& path, const ScenarioResult& r,
                                  const std::string& hash, std::uint64_t seed) {
  auto out = detail::open_report(path, hash, seed,
                                 "statistic,gamma,unit,pct_mean,pct_lo,pct_hi,switch_fraction");
  for (const auto& row : r.uncertainty) {
    out << to_string(row.statistic) << ',' << format_double(row.gamma) << ',' << row.unit << ','
        << format_double(row.pct_mean) << ',' << format_double(row.pct_lo) << ','
        << format_double(row.pct_hi) << ',' << format_double(row.switch_fraction) << "\n";
  }
}

inline void write_variance_curve_csv(const std::string& path, const VarianceCurve& curve,
                                     const std::string& hash, std::uint64_t seed) {
  auto out = detail::open_report(path, hash, seed, "epsilon,variance");
  for (std::size_t i = 0; i < curve.eps.size(); ++i) {
    out << format_double(curve.eps[i]) << ',' << format_double(curve.var[i]) << "\n";
  }
}

// ---------------------------------------------------------------------------
// run manifest: everything needed to replay a run byte-identically
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string config_path;  // as given on the command line; empty for pure defaults
  std::map<std::string, std::string> resolved_config;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string tool_version = kToolVersion;
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j;
  j["tool_version"] = m.tool_version;
  j["config_path"] = m.config_path;
  j["seed"] = m.seed;
  j["output_dir"] = m.output_dir;
  j["resolved_config"] = m.resolved_config;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_path = j.value("config_path", std::string{});
    m.seed = j.at("seed").get<std::uint64_t>();
    m.output_dir = j.at("output_dir").get<std::string>();
    m.resolved_config =
        j.at("resolved_config").get<std::map<std::string, std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("malformed manifest " + path + ": " + e.what());
  }
}

}  // namespace npt
