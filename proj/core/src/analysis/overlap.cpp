#include <algorithm>
#include <map>
#include <numeric>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/errors.hpp"

namespace ulrn::analysis {

namespace {

double sq_dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

}  // namespace

double cluster_overlap(std::span<const std::array<double, 2>> points, std::span<const int> labels,
                       std::size_t k) {
  const std::size_t n = points.size();
  require(labels.size() == n, ErrorKind::kShape, "labels do not align with points");
  require(n > k && k >= 1, ErrorKind::kContract, "too few points for the neighbour count");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  require(sizes.size() >= 2, ErrorKind::kContract, "cluster overlap needs at least two classes");

  double chance = 0.0;
  for (const auto& [_, c] : sizes) chance += static_cast<double>(c) * static_cast<double>(c - 1);
  chance /= static_cast<double>(n) * static_cast<double>(n - 1);

  double agree = 0.0;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::swap(idx[i], idx[n - 1]);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end() - 1,
                      [&](std::size_t a, std::size_t b) {
                        const double da = sq_dist(points[i], points[a]);
                        const double db = sq_dist(points[i], points[b]);
                        return da < db || (da == db && a < b);
                      });
    std::size_t same = 0;
    for (std::size_t m = 0; m < k; ++m) same += labels[idx[m]] == labels[i] ? 1 : 0;
    agree += static_cast<double>(same) / static_cast<double>(k);
  }
  agree /= static_cast<double>(n);
  if (chance >= 1.0) return 1.0;
  return std::clamp((1.0 - agree) / (1.0 - chance), 0.0, 1.0);
}

double nearest_centroid_purity(std::span<const std::array<double, 2>> points,
                               std::span<const int> labels) {
  require(labels.size() == points.size() && !points.empty(), ErrorKind::kShape,
          "labels do not align with points");
  std::map<int, std::array<double, 3>> acc;  // sum x, sum y, count
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& a = acc[labels[i]];
    a[0] += points[i][0];
    a[1] += points[i][1];
    a[2] += 1.0;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    int best = 0;
    double best_d = -1.0;
    for (const auto& [label, a] : acc) {
      const double d = sq_dist(points[i], {a[0] / a[2], a[1] / a[2]});
      if (best_d < 0.0 || d < best_d) {
        best_d = d;
        best = label;
      }
    }
    correct += best == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(points.size());
}

}  // namespace ulrn::analysis
