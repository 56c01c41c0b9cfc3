#include "ulrn/trainer/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "ulrn/errors.hpp"

namespace ulrn::trainer {

std::size_t warmup_steps(const TrainConfig& config, std::size_t total) {
  if (config.schedule != Schedule::kCosine) return 0;
  return static_cast<std::size_t>(std::llround(config.warmup_fraction * static_cast<double>(total)));
}

double learning_rate(const TrainConfig& config, std::size_t step, std::size_t total) {
  if (config.schedule == Schedule::kFixed) return config.lr;
  require(step < total, ErrorKind::kIndex,
          "step " + std::to_string(step) + " beyond schedule of " + std::to_string(total));
  const std::size_t warm = warmup_steps(config, total);
  if (step < warm) return config.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  const std::size_t span = total - warm;
  const double progress =
      span <= 1 ? 0.0 : static_cast<double>(step - warm) / static_cast<double>(span - 1);
  const double floor = config.min_lr_fraction * config.lr;
  return floor + (config.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_gradients(model::Gradients& grads, double max_norm) {
  const double norm = grads.norm();
  if (norm > max_norm) {
    const float factor = static_cast<float>(max_norm / norm);
    for (auto& v : grads.values)
      for (float& g : v) g *= factor;
  }
  return norm;
}

AdamW::AdamW(const model::ModelParameters& params, OptimizerConfig config) : config_(config) {
  for (const auto& t : params.tensors()) {
    m_.emplace_back(t.values->size(), 0.0f);
    v_.emplace_back(t.values->size(), 0.0f);
  }
}

void AdamW::step(model::ModelParameters& params, const model::Gradients& grads, double lr) {
  auto& tensors = params.mutable_tensors();
  require(grads.values.size() == tensors.size() && m_.size() == tensors.size(), ErrorKind::kShape,
          "optimizer state does not match the model");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& w = *tensors[k].values;
    const auto& g = grads.values[k];
    auto& m = m_[k];
    auto& v = v_[k];
    const double decay = tensors[k].shape.size() >= 2 ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps) + decay * w[i];
      w[i] = static_cast<float>(w[i] - lr * update);
    }
  }
}

}  // namespace ulrn::trainer
