#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/parallel.hpp"

namespace ulrn::analysis {

namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

}  // namespace

double KdeCurve::integral() const {
  double total = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    total += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
  }
  return total;
}

std::string KdeCurve::csv() const {
  std::string out = "x,density\n";
  char buf[64];
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", grid[i], density[i]);
    out += buf;
  }
  return out;
}

double scott_bandwidth(std::span<const double> samples) {
  require(samples.size() >= 2, ErrorKind::kContract, "KDE needs at least 2 samples");
  double m = 0.0;
  for (double s : samples) m += s;
  m /= static_cast<double>(samples.size());
  double ss = 0.0;
  for (double s : samples) ss += (s - m) * (s - m);
  const double sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  require(sd > 0.0, ErrorKind::kContract,
          "samples have zero variance; Scott's rule is undefined, pass an explicit bandwidth");
  return std::pow(static_cast<double>(samples.size()), -0.2) * sd;
}

KdeCurve kde(std::span<const double> samples, std::optional<double> bandwidth,
             std::size_t grid_size, std::optional<std::array<double, 2>> range) {
  require(!samples.empty(), ErrorKind::kContract, "KDE of an empty sample");
  require(bandwidth.has_value() || samples.size() >= 2, ErrorKind::kContract,
          "KDE with automatic bandwidth needs at least 2 samples");
  require(grid_size >= 2, ErrorKind::kContract, "KDE grid needs at least 2 points");
  for (double s : samples) require(std::isfinite(s), ErrorKind::kContract, "non-finite KDE sample");
  KdeCurve curve;
  curve.bandwidth = bandwidth ? *bandwidth : scott_bandwidth(samples);
  require(curve.bandwidth > 0.0 && std::isfinite(curve.bandwidth), ErrorKind::kContract,
          "KDE bandwidth must be positive");
  curve.samples = samples.size();
  double lo, hi;
  if (range) {
    lo = (*range)[0];
    hi = (*range)[1];
    require(lo < hi, ErrorKind::kContract, "KDE range must be increasing");
  } else {
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    lo = *mn - 4.0 * curve.bandwidth;
    hi = *mx + 4.0 * curve.bandwidth;
  }
  curve.grid.resize(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) {
    curve.grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_size - 1);
  }
  curve.density.resize(grid_size);
  const double h = curve.bandwidth;
  const double norm = kInvSqrt2Pi / (static_cast<double>(samples.size()) * h);
  parallel_for(grid_size, [&](std::size_t i) {
    double acc = 0.0;
    for (double s : samples) {
      const double u = (curve.grid[i] - s) / h;
      acc += std::exp(-0.5 * u * u);
    }
    curve.density[i] = acc * norm;
  });
  return curve;
}

std::vector<double> kde_counts(std::span<const std::size_t> counts, double bandwidth,
                               std::span<const double> grid) {
  require(bandwidth > 0.0, ErrorKind::kContract, "KDE bandwidth must be positive");
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  require(n > 0, ErrorKind::kContract, "KDE of an empty sample");
  const double norm = kInvSqrt2Pi / (static_cast<double>(n) * bandwidth);
  const double reach = 8.0 * bandwidth;
  std::vector<double> out(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const double x = grid[i];
    const auto first = static_cast<std::ptrdiff_t>(std::ceil(x - reach));
    const auto last = static_cast<std::ptrdiff_t>(std::floor(x + reach));
    double acc = 0.0;
    for (std::ptrdiff_t v = std::max<std::ptrdiff_t>(first, 0);
         v <= last && v < static_cast<std::ptrdiff_t>(counts.size()); ++v) {
      if (counts[static_cast<std::size_t>(v)] == 0) continue;
      const double u = (x - static_cast<double>(v)) / bandwidth;
      acc += static_cast<double>(counts[static_cast<std::size_t>(v)]) * std::exp(-0.5 * u * u);
    }
    out[i] = acc * norm;
  });
  return out;
}

}  // namespace ulrn::analysis
