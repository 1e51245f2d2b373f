#pragma once

#include <stdexcept>
#include <string>

namespace npt {

/** Invalid or inconsistent user-supplied configuration (CLI exit code 2). */
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/**
 * Model fitting failure (separation, non-convergence). Carries the iteration
 * diagnostics so callers can report how far the optimizer got.
 */
struct estimation_error : std::runtime_error {
  estimation_error(const std::string& what, std::size_t iterations_run, double grad_max_norm)
      : std::runtime_error(what + " (iterations=" + std::to_string(iterations_run) +
                           ", grad_max_norm=" + std::to_string(grad_max_norm) + ")"),
        iterations(iterations_run),
        grad_norm(grad_max_norm) {}
  std::size_t iterations;
  double grad_norm;
};

}  // namespace npt
