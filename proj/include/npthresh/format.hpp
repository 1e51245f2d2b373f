#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>

namespace npt {

/**
 * Shortest decimal text that round-trips the double. One code path for every
 * numeric cell keeps report files byte-stable across runs.
 */
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace npt
