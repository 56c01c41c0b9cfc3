#pragma once

#include <vector>

#include "ulrn/model/transformer.hpp"
#include "ulrn/trainer/config.hpp"

namespace ulrn::trainer {

// Learning rate for 0-based step `step` of `total`. Cosine: linear warmup
// over round(warmup_fraction * total) steps, then cosine from peak at the
// first post-warmup step down to min_lr_fraction * peak at the last step.
double learning_rate(const TrainConfig& config, std::size_t step, std::size_t total);
std::size_t warmup_steps(const TrainConfig& config, std::size_t total);

// Rescales in place so the global norm is at most max_norm; returns the norm
// before clipping.
double clip_gradients(model::Gradients& grads, double max_norm);

class AdamW {
 public:
  AdamW(const model::ModelParameters& params, OptimizerConfig config);

  // One update with already clipped gradients. Weight decay skips rank-1
  // tensors (norm gains).
  void step(model::ModelParameters& params, const model::Gradients& grads, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace ulrn::trainer
