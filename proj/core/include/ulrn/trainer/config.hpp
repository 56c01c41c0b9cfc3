#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "ulrn/losses/losses.hpp"
#include "ulrn/model/transformer.hpp"

namespace ulrn::trainer {

enum class Stage { kPretrain, kContinuedPretrain, kSFT, kUnlearn };
enum class Schedule { kCosine, kFixed };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);  // pretrain | continue | sft | unlearn
std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view name);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;  // decoupled; matrices only
  double grad_clip = 1.0;     // global L2 norm
};

// Every key of the flat "key = value" config file, with its default.
//
//   stage               pretrain | continue | sft | unlearn   (required)
//   lr                  peak learning rate                    stage default
//   schedule            cosine | fixed                        stage default
//   steps               optimizer steps; 0 = derive from epochs (sft) or
//                       forget_token_budget (unlearn)         stage default
//   epochs              sft passes over the data              2
//   batch_size          documents per step (per side for unlearn)  8
//   context             tokens per training window            128
//   seed                sampling and init seed                1234
//   warmup_fraction     linear warmup share of cosine runs    0.01
//   min_lr_fraction     cosine floor relative to peak         0.1
//   w_fgt, w_rpy, w_mtn unlearning weights                    0.01, 1, 1
//   forget_loss         lower_bounded | gradient_ascent | renormalized
//   forget_token_budget SynthQA tokens consumed by unlearn    0
//   beta1, beta2, adam_eps, weight_decay, grad_clip           0.9, 0.95, 1e-8, 0.1, 1
//   divergence_factor   abort when loss > factor * initial    2
//   divergence_window   ... for this many consecutive steps  100 (0 disables)
//   init_std            weight init std (pretrain)            0.02
//   vocab_size, hidden_size, ffn_size, n_heads, n_layers, max_context,
//   rope_base, activation, norm_eps                           model shape (pretrain)
struct TrainConfig {
  Stage stage = Stage::kPretrain;
  double lr = 1e-3;
  Schedule schedule = Schedule::kCosine;
  std::size_t steps = 2000;
  std::size_t epochs = 2;
  std::size_t batch_size = 8;
  std::size_t context = 128;
  std::uint64_t seed = 1234;
  double warmup_fraction = 0.01;
  double min_lr_fraction = 0.1;
  losses::LossWeights weights;
  losses::ForgetLoss forget_loss = losses::ForgetLoss::kLowerBounded;
  std::size_t forget_token_budget = 0;
  OptimizerConfig optimizer;
  double divergence_factor = 2.0;
  std::size_t divergence_window = 100;
  float init_std = 0.02f;
  model::ModelConfig model;

  void validate() const;  // throws kConfig
};

// Stage-specific defaults (schedule, lr, steps).
TrainConfig default_config(Stage stage);

// Parses "key = value" lines; '#' starts a comment. Unknown keys, repeated
// keys and malformed values are kConfig errors. The stage key selects the
// defaults the remaining keys override.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

// Canonical text form: every key, fixed order. parse_config(to_text(c)) == c.
std::string to_text(const TrainConfig& config);
std::string config_hash(const TrainConfig& config);  // sha256 of to_text

}  // namespace ulrn::trainer
