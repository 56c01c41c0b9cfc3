#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ulrn/autodiff/tensor.hpp"

namespace testing {

using Builder = std::function<ulrn::ad::Tensor(ulrn::ad::Graph&, const std::vector<ulrn::ad::Tensor>&)>;

// Largest relative error between autodiff gradients and central differences,
// with |a - n| / max(|a|, |n|, floor).
inline double gradcheck(const std::vector<ulrn::ad::Shape>& shapes,
                        std::vector<std::vector<float>> values, const Builder& build,
                        double h = 1e-2, double floor = 1e-2) {
  using namespace ulrn::ad;
  auto eval = [&](const std::vector<std::vector<float>>& v, std::vector<std::vector<float>>* grads) {
    Graph g;
    std::vector<Tensor> xs;
    for (std::size_t i = 0; i < shapes.size(); ++i) xs.push_back(g.variable(shapes[i], v[i]));
    Tensor out = build(g, xs);
    const double val = out.item();
    if (grads != nullptr) {
      g.backward(out);
      for (const auto& x : xs) grads->push_back(x.grad());
    }
    return val;
  };
  std::vector<std::vector<float>> analytic;
  eval(values, &analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      const float keep = values[i][j];
      values[i][j] = keep + static_cast<float>(h);
      const double up = eval(values, nullptr);
      values[i][j] = keep - static_cast<float>(h);
      const double down = eval(values, nullptr);
      values[i][j] = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline std::vector<float> ramp(std::size_t n, float lo, float hi, unsigned salt = 0) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::sin(1.7 * static_cast<double>(i + 1) + 0.3 * salt);
    v[i] = lo + static_cast<float>((t + 1) / 2) * (hi - lo);
  }
  return v;
}

}  // namespace testing
