#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ulrn/corpus/corpus.hpp"
#include "ulrn/model/transformer.hpp"

namespace ulrn::losses {

using corpus::TokenId;

struct LossWeights {
  double fgt = 0.01;
  double rpy = 1.0;
  double mtn = 1.0;

  void validate() const;  // throws kConfig
};

// Which forgetting objective the unlearning run optimizes.
//   lower_bounded:   -log(1 - p_target), bounded below by 0
//   gradient_ascent: -CE, the unbounded baseline
//   renormalized:    -log of the complement renormalized over V entries,
//                    i.e. -log((1 - p_target) / (V - 1))
enum class ForgetLoss { kLowerBounded, kGradientAscent, kRenormalized };

std::string_view to_string(ForgetLoss f);
ForgetLoss parse_forget_loss(std::string_view name);

struct LossBreakdown {
  double fgt = 0.0;
  double rpy = 0.0;
  double mtn = 0.0;
  double total = 0.0;
  std::size_t fgt_tokens = 0;
  std::size_t rpy_tokens = 0;
  std::size_t mtn_tokens = 0;
};

// -log(max(probs[target], 1e-12)).
double cross_entropy(std::span<const float> probs, TokenId target);

// One differentiable loss term on a graph plus its value in double precision.
// Every term is a per-token mean over prediction positions 1..n-1.
struct Term {
  ad::Tensor loss;  // scalar
  double value = 0.0;
  std::size_t tokens = 0;
};

// Terms over precomputed logits [n-1, V] for ids of length n.
Term cross_entropy_from_logits(const ad::Tensor& logits, std::span<const TokenId> ids,
                               std::span<const std::uint8_t> mask = {});
Term forgetting_from_logits(const ad::Tensor& logits, std::span<const TokenId> ids,
                            ForgetLoss kind = ForgetLoss::kLowerBounded);

// Mean next-token cross-entropy. With a mask, only positions whose target has
// mask[i] != 0 count (mask is indexed by target position, size n).
Term cross_entropy_term(model::ModelGraph& model, std::span<const TokenId> ids,
                        std::span<const std::uint8_t> mask = {});
Term forgetting_term(model::ModelGraph& model, std::span<const TokenId> ids,
                     ForgetLoss kind = ForgetLoss::kLowerBounded);
// KL(p_ori || p_cur) per position, where `reference` yields p_ori. Shares the
// logits of an already built forward pass when `logits` is given.
Term mitigation_term(model::ModelGraph& model, const model::ModelParameters& reference,
                     std::span<const TokenId> ids, ad::Tensor logits = {});

// Value-only entry points.
double forgetting_loss(const model::ModelParameters& params, const corpus::TokenSequence& seq,
                       ForgetLoss kind = ForgetLoss::kLowerBounded);
double gradient_ascent_loss(const model::ModelParameters& params, const corpus::TokenSequence& seq);
double replay_loss(const model::ModelParameters& params, const corpus::TokenSequence& seq);
double bias_mitigation_loss(const model::ModelParameters& current,
                            const model::ModelParameters& original,
                            const corpus::TokenSequence& seq);

// KL(p || q) with the log clamp on both sides.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct UnlearnResult {
  LossBreakdown breakdown;
  model::Gradients gradients;  // of breakdown.total
};

// Weighted objective over one step's batches. Each term is the mean of the
// per-document means of its batch; documents are processed in parallel and
// their gradients reduced in batch order.
UnlearnResult unlearning_loss(const model::ModelParameters& params,
                              const model::ModelParameters& original,
                              std::span<const corpus::TaggedSequence> synth_batch,
                              std::span<const corpus::TaggedSequence> nonsynth_batch,
                              const LossWeights& weights,
                              ForgetLoss kind = ForgetLoss::kLowerBounded,
                              bool with_gradients = true);

}  // namespace ulrn::losses
