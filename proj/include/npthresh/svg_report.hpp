#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "npthresh/format.hpp"
#include "npthresh/harness.hpp"
#include "npthresh/stats.hpp"

namespace npt {
namespace svg {

inline std::string num(double v) {
  // fixed short decimals keep the files small and diffable
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::ofstream open(const std::string& path, int width, int height) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write svg file: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out;
}

inline void text(std::ofstream& out, double x, double y, const std::string& s, int size = 12,
                 const std::string& anchor = "middle") {
  out << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
      << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
}

inline void line(std::ofstream& out, double x1, double y1, double x2, double y2,
                 const std::string& stroke = "#444", double width = 1.0) {
  out << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
      << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
      << num(width) << "\"/>\n";
}

/** Gaussian kernel density on a fixed grid, Silverman bandwidth. */
inline std::vector<double> kde(const std::vector<double>& v, const std::vector<double>& grid) {
  const double n = static_cast<double>(v.size());
  double m = mean(v);
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  const double sd = std::sqrt(s2 / std::max(n - 1.0, 1.0));
  const double h = std::max(1.06 * sd * std::pow(n, -0.2), 1e-6);
  std::vector<double> dens(grid.size(), 0.0);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * 3.141592653589793));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    for (double x : v) {
      const double z = (grid[g] - x) / h;
      dens[g] += std::exp(-0.5 * z * z);
    }
    dens[g] *= norm;
  }
  return dens;
}

}  // namespace svg

/**
 * Violin (mirrored kernel density) of per-iteration overlap percentages, one
 * violin per labelled series, with a median tick.
 */
inline void write_overlap_violin_svg(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  if (series.empty()) throw std::domain_error("write_overlap_violin_svg: no series");
  const int w = 180 + 140 * static_cast<int>(series.size());
  const int h = 420;
  const double top = 40, bottom = 60, left = 70;
  auto out = svg::open(path, w, h);

  double lo = 1e300, hi = -1e300;
  for (const auto& [label, v] : series) {
    if (v.empty()) throw std::domain_error("write_overlap_violin_svg: empty series");
    lo = std::min(lo, *std::min_element(v.begin(), v.end()));
    hi = std::max(hi, *std::max_element(v.begin(), v.end()));
  }
  const double pad = std::max(0.05 * (hi - lo), 1.0);
  lo = std::max(0.0, lo - pad);
  hi = hi + pad;
  const auto ypix = [&](double v) { return (h - bottom) - (v - lo) / (hi - lo) * (h - top - bottom); };

  svg::line(out, left, top, left, h - bottom);
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    svg::line(out, left - 4, ypix(v), left, ypix(v));
    svg::text(out, left - 8, ypix(v) + 4, svg::num(v), 11, "end");
  }
  svg::text(out, 16, (top + h - bottom) / 2, "overlap %", 12, "middle");

  std::vector<double> grid(120);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    grid[g] = lo + (hi - lo) * static_cast<double>(g) / (grid.size() - 1);
  }
  const double half_width = 55.0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& [label, v] = series[k];
    const double cx = left + 80 + 140.0 * static_cast<double>(k);
    const auto dens = svg::kde(v, grid);
    const double dmax = std::max(*std::max_element(dens.begin(), dens.end()), 1e-300);
    std::string pts;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      pts += svg::num(cx + half_width * dens[g] / dmax) + "," + svg::num(ypix(grid[g])) + " ";
    }
    for (std::size_t g = grid.size(); g-- > 0;) {
      pts += svg::num(cx - half_width * dens[g] / dmax) + "," + svg::num(ypix(grid[g])) + " ";
    }
    out << "<polygon points=\"" << pts
        << "\" fill=\"#7aa6c2\" fill-opacity=\"0.6\" stroke=\"#2d5d7b\"/>\n";
    const double med = median(v);
    svg::line(out, cx - half_width * 0.5, ypix(med), cx + half_width * 0.5, ypix(med), "#1b3a4b",
              2.0);
    svg::text(out, cx, h - bottom + 20, label, 12);
  }
  out << "</svg>\n";
}

/**
 * Grouped bar chart of one aggregate metric (rmse by default): one group per
 * estimator variant, one bar per gamma inside the group.
 */
inline void write_aggregate_bars_svg(const std::string& path,
                                     const std::vector<AggregateRow>& rows) {
  if (rows.empty()) throw std::domain_error("write_aggregate_bars_svg: no rows");
  std::vector<EstimatorVariant> variants;
  std::vector<double> gammas;
  double vmax = 0.0;
  for (const auto& r : rows) {
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) {
      variants.push_back(r.variant);
    }
    if (std::find(gammas.begin(), gammas.end(), r.gamma) == gammas.end()) {
      gammas.push_back(r.gamma);
    }
    vmax = std::max(vmax, r.rmse);
  }
  std::sort(gammas.begin(), gammas.end());
  if (vmax <= 0.0) vmax = 1.0;

  const double bar_w = 26.0, group_gap = 30.0;
  const double group_w = bar_w * static_cast<double>(gammas.size()) + group_gap;
  const int w = 120 + static_cast<int>(group_w * static_cast<double>(variants.size())) + 40;
  const int h = 460;
  const double top = 40, bottom = 130, left = 80;
  auto out = svg::open(path, w, h);
  const auto ypix = [&](double v) { return (h - bottom) - v / (vmax * 1.08) * (h - top - bottom); };

  svg::line(out, left, top, left, h - bottom);
  svg::line(out, left, h - bottom, w - 20, h - bottom);
  for (int t = 0; t <= 4; ++t) {
    const double v = vmax * 1.08 * t / 4.0;
    svg::line(out, left - 4, ypix(v), left, ypix(v));
    svg::text(out, left - 8, ypix(v) + 4, svg::num(v), 11, "end");
  }
  svg::text(out, 20, (top + h - bottom) / 2, "rmse", 12, "middle");

  const char* palette[] = {"#7aa6c2", "#c27a7a", "#8cc27a", "#c2b57a", "#9b7ac2", "#7ac2b9"};
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const double gx = left + 20 + group_w * static_cast<double>(vi);
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
      for (const auto& r : rows) {
        if (r.variant != variants[vi] || r.gamma != gammas[gi]) continue;
        const double x = gx + bar_w * static_cast<double>(gi);
        const double y = ypix(r.rmse);
        out << "<rect x=\"" << svg::num(x) << "\" y=\"" << svg::num(y) << "\" width=\""
            << svg::num(bar_w - 3) << "\" height=\"" << svg::num((h - bottom) - y)
            << "\" fill=\"" << palette[gi % 6] << "\" stroke=\"#333\"/>\n";
      }
    }
    const double cx = gx + bar_w * static_cast<double>(gammas.size()) / 2.0;
    out << "<text x=\"" << svg::num(cx) << "\" y=\"" << svg::num(h - bottom + 14)
        << "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\" transform=\"rotate(-35 "
        << svg::num(cx) << ' ' << svg::num(h - bottom + 14) << ")\">" << to_string(variants[vi])
        << "</text>\n";
  }
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    const double lx = left + 20 + static_cast<double>(gi) * 130.0;
    out << "<rect x=\"" << svg::num(lx) << "\" y=\"" << svg::num(h - 40.0)
        << "\" width=\"14\" height=\"14\" fill=\"" << palette[gi % 6] << "\" stroke=\"#333\"/>\n";
    svg::text(out, lx + 20, h - 28.0,
              gammas[gi] == 0.0 ? std::string("no threshold") : "gamma " + format_double(gammas[gi]),
              11, "start");
  }
  out << "</svg>\n";
}

}  // namespace npt
