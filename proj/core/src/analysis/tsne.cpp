#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/parallel.hpp"

namespace ulrn::analysis {

double conditional_affinities(std::span<const double> d, std::size_t self,
                              double target_perplexity, std::span<double> out) {
  const std::size_t n = d.size();
  double d_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != self) d_min = std::min(d_min, d[j]);
  const double log_target = std::log(target_perplexity);

  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double perp = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    double sum = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == self) {
        out[j] = 0.0;
        continue;
      }
      const double shifted = d[j] - d_min;
      out[j] = std::exp(-beta * shifted);
      sum += out[j];
      weighted += shifted * out[j];
    }
    // Entropy of the normalized row (natural log).
    const double h = std::log(sum) + beta * weighted / sum;
    for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
    perp = std::exp(h);
    if (std::abs(perp - target_perplexity) < 1e-5) break;
    if (h > log_target) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
  return perp;
}

std::string Projection2D::csv(std::span<const std::string> labels) const {
  require(labels.size() == points.size(), ErrorKind::kShape, "labels do not align with points");
  std::string out = "x,y,label\n";
  char buf[80];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.8g,%.8g,", points[i][0], points[i][1]);
    out += buf + labels[i] + "\n";
  }
  return out;
}

Projection2D tsne(const std::vector<std::vector<float>>& x, const TsneOptions& o) {
  const std::size_t n = x.size();
  require(o.perplexity > 0.0 && static_cast<double>(n) >= 3.0 * o.perplexity, ErrorKind::kContract,
          "t-SNE needs at least 3 x perplexity points (" + std::to_string(n) + " given, perplexity " +
              std::to_string(o.perplexity) + ")");
  const std::size_t dim = x[0].size();
  require(dim >= 2, ErrorKind::kContract, "t-SNE input needs at least 2 dimensions");
  for (const auto& row : x) require(row.size() == dim, ErrorKind::kShape, "ragged t-SNE input");

  std::vector<double> dist(n * n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = static_cast<double>(x[i][k]) - x[j][k];
        s += diff * diff;
      }
      dist[i * n + j] = s;
    }
  });

  std::vector<double> cond(n * n);
  parallel_for(n, [&](std::size_t i) {
    conditional_affinities(std::span<const double>(dist).subspan(i * n, n), i, o.perplexity,
                           std::span<double>(cond).subspan(i * n, n));
  });
  std::vector<double> p(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n));

  Projection2D proj;
  proj.seed = o.seed;
  proj.iterations = o.iterations;
  std::vector<double> y(n * 2), update(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2);
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  for (double& v : y) v = init(rng);

  std::vector<double> num(n * n), row_sum(n);
  for (std::size_t it = 0; it < o.iterations; ++it) {
    parallel_for(n, [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) {
          num[i * n + j] = 0.0;
          continue;
        }
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
        s += num[i * n + j];
      }
      row_sum[i] = s;
    });
    double z = 0.0;
    for (double s : row_sum) z += s;
    const double exag = it < o.exaggeration_iterations ? o.exaggeration : 1.0;
    parallel_for(n, [&](std::size_t i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = (exag * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
        gx += w * (y[2 * i] - y[2 * j]);
        gy += w * (y[2 * i + 1] - y[2 * j + 1]);
      }
      grad[2 * i] = 4.0 * gx;
      grad[2 * i + 1] = 4.0 * gy;
    });
    const double momentum = it < o.momentum_switch ? o.initial_momentum : o.final_momentum;
    for (std::size_t k = 0; k < y.size(); ++k) {
      const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
      gains[k] = same_sign ? std::max(gains[k] * 0.8, 0.01) : gains[k] + 0.2;
      update[k] = momentum * update[k] - o.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cx += y[2 * i];
      cy += y[2 * i + 1];
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= cx;
      y[2 * i + 1] -= cy;
    }

    // Objective at the updated positions, with the true (unexaggerated) P.
    std::vector<double> row_kl(n);
    double z2 = 0.0;
    parallel_for(n, [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        s += 1.0 / (1.0 + dx * dx + dy * dy);
      }
      row_sum[i] = s;
    });
    for (double s : row_sum) z2 += s;
    parallel_for(n, [&](std::size_t i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double pij = p[i * n + j];
        if (i == j || pij <= 0.0) continue;
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy) / z2;
        acc += pij * std::log(pij / std::max(q, 1e-300));
      }
      row_kl[i] = acc;
    });
    double kl = 0.0;
    for (double r : row_kl) kl += r;
    proj.kl_curve.push_back(kl);
  }
  proj.kl = proj.kl_curve.empty() ? 0.0 : proj.kl_curve.back();
  proj.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    proj.points[i] = {y[2 * i], y[2 * i + 1]};
    require(std::isfinite(y[2 * i]) && std::isfinite(y[2 * i + 1]), ErrorKind::kDivergence,
            "t-SNE produced non-finite coordinates");
  }
  return proj;
}

}  // namespace ulrn::analysis
