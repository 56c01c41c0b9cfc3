#include <algorithm>
#include <cmath>
#include <limits>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/errors.hpp"

namespace ulrn::analysis {

double mean(std::span<const double> x) {
  require(!x.empty(), ErrorKind::kContract, "mean of an empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size());
}

double percentile(std::span<const double> x, double q) {
  require(!x.empty(), ErrorKind::kContract, "percentile of an empty sample");
  require(q >= 0.0 && q <= 100.0, ErrorKind::kContract, "percentile outside [0, 100]");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double pos = q / 100.0 * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::kContract, "KS statistic of an empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  // Step through every distinct value, advancing past ties on both sides.
  while (i < x.size() || j < y.size()) {
    double v;
    if (j == y.size() || (i < x.size() && x[i] <= y[j])) {
      v = x[i];
    } else {
      v = y[j];
    }
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

ShiftMetrics shift_metrics(std::span<const double> before, std::span<const double> after) {
  ShiftMetrics m;
  m.mean_shift = mean(after) - mean(before);
  const double vb = variance(before), va = variance(after);
  if (vb > 0.0) {
    m.variance_ratio = va / vb;
  } else {
    m.variance_ratio = va > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  }
  m.ks = ks_statistic(before, after);
  return m;
}

nlohmann::json ShiftMetrics::to_json() const {
  return {{"mean_shift", mean_shift}, {"variance_ratio", variance_ratio}, {"ks", ks}};
}

}  // namespace ulrn::analysis
