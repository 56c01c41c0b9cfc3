#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ulrn/corpus/corpus.hpp"
#include "ulrn/losses/losses.hpp"
#include "ulrn/model/transformer.hpp"
#include "ulrn/trainer/config.hpp"

namespace ulrn::trainer {

struct StepLog {
  std::size_t step = 0;
  losses::LossBreakdown loss;  // non-unlearn stages fill rpy and total only
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
  std::size_t tokens_seen = 0;
};

struct RunRecord {
  TrainConfig config;
  std::vector<StepLog> steps;
  std::size_t warmup_steps = 0;
  std::size_t examples = 0;           // training windows available
  double synth_token_fraction = 0.0;  // of the training windows
  double forget_repetitions = 0.0;    // unlearn: passes over the SynthQA set
  std::size_t forget_tokens = 0;      // unlearn: SynthQA tokens consumed
  std::uint32_t initial_checksum = 0;
  std::uint32_t final_checksum = 0;
  std::uint32_t reference_checksum = 0;  // unlearn: frozen model
  double wall_seconds = 0.0;
  std::string checkpoint;

  // Training log; columns step,fgt,rpy,mtn,total,lr,grad_norm,tokens_seen.
  // A leading '#' line carries the tool version and config hash.
  std::string csv() const;
  nlohmann::json to_json() const;
};

struct TrainResult {
  model::ModelParameters params;
  RunRecord record;
};

// Splits each sequence into consecutive windows of at most `context` tokens;
// windows shorter than 2 tokens are dropped.
std::vector<corpus::TaggedSequence> make_windows(std::span<const corpus::TaggedSequence> data,
                                                 std::size_t context);

// Loss mask for SFT: 1 for every target after the assistant marker.
std::vector<std::uint8_t> assistant_mask(std::span<const corpus::TokenId> ids,
                                         corpus::TokenId assistant_marker);

TrainResult pretrain(const TrainConfig& config, std::span<const corpus::TaggedSequence> data);
TrainResult continued_pretrain(const model::ModelParameters& base, const TrainConfig& config,
                               std::span<const corpus::TaggedSequence> mixed);
TrainResult sft(const model::ModelParameters& base, const TrainConfig& config,
                std::span<const corpus::TaggedSequence> instruct,
                corpus::TokenId assistant_marker);
TrainResult unlearn(const model::ModelParameters& synth_model, const TrainConfig& config,
                    std::span<const corpus::TaggedSequence> synth,
                    std::span<const corpus::TaggedSequence> replay);

}  // namespace ulrn::trainer
