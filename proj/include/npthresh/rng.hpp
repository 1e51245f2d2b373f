#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace npt {

/**
 * Finalizer from splitmix64; used to turn (base seed, stream tag, index)
 * into decorrelated engine seeds for independent substreams.
 */
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/**
 * Seeded RNG with hand-rolled variate transforms.
 *
 * The standard <random> distributions are implementation-defined, so all
 * transforms are done here from raw engine output; two runs of the same
 * binary (and builds against different standard libraries) produce the
 * same streams. mt19937_64 itself is pinned by the standard.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /** Independent substream keyed by (base, tag, index). */
  static Rng stream(std::uint64_t base, std::uint64_t tag, std::uint64_t index = 0) {
    return Rng(mix64(base ^ mix64(tag ^ mix64(index))));
  }

  /** Uniform double in [0, 1) with 53-bit resolution. */
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /** Uniform double in (0, 1]; safe as a log/sqrt argument. */
  double uniform01_open_low() { return 1.0 - uniform01(); }

  /** Standard normal via Box-Muller (two uniforms per call, no cached spare). */
  double normal() {
    const double u = uniform01_open_low();
    const double v = uniform01();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * kPi * v);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /** Beta(1,2) variate: density 2(1-x) on (0,1). */
  double beta12() { return 1.0 - std::sqrt(uniform01_open_low()); }

  /** Unbiased uniform integer in [0, n) (Lemire's multiply-shift rejection). */
  std::uint64_t below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t cutoff = static_cast<std::uint64_t>(-n) % n;
      while (lo < cutoff) {
        m = static_cast<unsigned __int128>(engine_()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /** Fisher-Yates shuffle using below(); deterministic given the stream state. */
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
};

/** Stream tags for the pipeline stages; keep values stable, they feed seeds. */
enum class StreamTag : std::uint64_t {
  covariates = 1,
  outcomes = 2,
  reference_draw = 3,
  convenience_draw = 4,
  mcmc = 5,
  oracle = 6,
};

inline Rng stream_for(std::uint64_t base, StreamTag tag, std::uint64_t index = 0) {
  return Rng::stream(base, static_cast<std::uint64_t>(tag), index);
}

}  // namespace npt
