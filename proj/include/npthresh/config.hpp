#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "npthresh/errors.hpp"
#include "npthresh/format.hpp"
#include "npthresh/harness.hpp"

namespace npt {

inline constexpr const char* kToolVersion = "npthresh 0.1.0";

// ---------------------------------------------------------------------------
// flat key-value config format: one "key = value" per line, '#' comments
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string s) {
  const auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw config_error("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key)) {
      throw config_error("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// typed access and binding to ScenarioConfig
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': cannot parse number from '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    // stoull would wrap a leading minus around instead of failing
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': cannot parse integer from '" + v + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace detail

inline EstimatorVariant variant_from_string(const std::string& s) {
  for (EstimatorVariant v : all_variants()) {
    if (to_string(v) == s) return v;
  }
  throw config_error("unknown estimator variant: '" + s + "'");
}

inline OverlapMode mode_from_string(const std::string& s) {
  if (s == "H" || s == "h" || s == "high") return OverlapMode::High;
  if (s == "L" || s == "l" || s == "low") return OverlapMode::Low;
  throw config_error("unknown overlap_mode: '" + s + "' (expected H or L)");
}

inline OverlapDenominator denominator_from_string(const std::string& s) {
  if (s == "reference") return OverlapDenominator::Reference;
  if (s == "convenience") return OverlapDenominator::Convenience;
  if (s == "union") return OverlapDenominator::Union;
  throw config_error("unknown overlap_denominator: '" + s + "'");
}

inline std::string to_string(OverlapDenominator d) {
  switch (d) {
    case OverlapDenominator::Reference: return "reference";
    case OverlapDenominator::Convenience: return "convenience";
    case OverlapDenominator::Union: return "union";
  }
  return "?";
}

/** Bind a parsed key-value map onto a ScenarioConfig; unknown keys are errors. */
inline ScenarioConfig scenario_from_config(const std::map<std::string, std::string>& kv) {
  ScenarioConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "n_units") cfg.population.n_units = detail::parse_u64(key, value);
    else if (key == "n_covariates") cfg.population.n_covariates = detail::parse_u64(key, value);
    else if (key == "beta") {
      cfg.population.beta.clear();
      for (const auto& item : detail::split_list(value)) {
        cfg.population.beta.push_back(detail::parse_double(key, item));
      }
    } else if (key == "overlap_mode") cfg.population.mode = mode_from_string(value);
    else if (key == "log_outcome_variance") {
      cfg.population.log_outcome_variance = detail::parse_double(key, value);
    } else if (key == "target_n_reference") {
      cfg.population.target_n_reference = detail::parse_u64(key, value);
    } else if (key == "target_n_convenience") {
      cfg.population.target_n_convenience = detail::parse_double(key, value);
    } else if (key == "backend") {
      if (value == "mcmc") cfg.propensity.backend = PropensityBackend::Mcmc;
      else if (value == "mle") cfg.propensity.backend = PropensityBackend::Mle;
      else throw config_error("config key 'backend': expected mcmc or mle, got '" + value + "'");
    } else if (key == "draws") cfg.propensity.draws = detail::parse_u64(key, value);
    else if (key == "prior_sd") cfg.propensity.prior_sd = detail::parse_double(key, value);
    else if (key == "anchor_tau") cfg.propensity.anchor_tau = detail::parse_double(key, value);
    else if (key == "grad_tol") cfg.propensity.grad_tol = detail::parse_double(key, value);
    else if (key == "max_iter") cfg.propensity.max_iter = detail::parse_u64(key, value);
    else if (key == "variants") {
      cfg.variants.clear();
      for (const auto& item : detail::split_list(value)) {
        cfg.variants.push_back(variant_from_string(item));
      }
    } else if (key == "gamma_list") {
      cfg.gamma_list.clear();
      for (const auto& item : detail::split_list(value)) {
        cfg.gamma_list.push_back(detail::parse_double(key, item));
      }
    } else if (key == "iterations") cfg.iterations = detail::parse_u64(key, value);
    else if (key == "seed") cfg.seed = detail::parse_u64(key, value);
    else if (key == "jobs") cfg.jobs = detail::parse_u64(key, value);
    else if (key == "overlap_denominator") {
      cfg.overlap_denominator = denominator_from_string(value);
    } else {
      throw config_error("unknown config key: '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

/** Canonical, fully resolved key-value image of a ScenarioConfig. */
inline std::map<std::string, std::string> to_config_map(const ScenarioConfig& cfg) {
  const auto join_doubles = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
  };
  std::map<std::string, std::string> kv;
  kv["n_units"] = std::to_string(cfg.population.n_units);
  kv["n_covariates"] = std::to_string(cfg.population.n_covariates);
  kv["beta"] = join_doubles(cfg.population.beta);
  kv["overlap_mode"] = to_string(cfg.population.mode);
  kv["log_outcome_variance"] = format_double(cfg.population.log_outcome_variance);
  kv["target_n_reference"] = std::to_string(cfg.population.target_n_reference);
  kv["target_n_convenience"] = format_double(cfg.population.target_n_convenience);
  kv["backend"] = cfg.propensity.backend == PropensityBackend::Mcmc ? "mcmc" : "mle";
  kv["draws"] = std::to_string(cfg.propensity.draws);
  kv["prior_sd"] = format_double(cfg.propensity.prior_sd);
  kv["anchor_tau"] = format_double(cfg.propensity.anchor_tau);
  kv["grad_tol"] = format_double(cfg.propensity.grad_tol);
  kv["max_iter"] = std::to_string(cfg.propensity.max_iter);
  std::string vs;
  for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
    vs += (i ? "," : "") + to_string(cfg.variants[i]);
  }
  kv["variants"] = vs;
  kv["gamma_list"] = join_doubles(cfg.gamma_list);
  kv["iterations"] = std::to_string(cfg.iterations);
  kv["seed"] = std::to_string(cfg.seed);
  kv["jobs"] = std::to_string(cfg.jobs);
  kv["overlap_denominator"] = to_string(cfg.overlap_denominator);
  return kv;
}

inline std::string serialize_config(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash_hex(const ScenarioConfig& cfg) {
  const std::uint64_t h = fnv1a64(serialize_config(to_config_map(cfg)));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace npt
