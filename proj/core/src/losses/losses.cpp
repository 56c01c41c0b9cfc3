#include "ulrn/losses/losses.hpp"

#include <cmath>
#include <memory>

#include "ulrn/autodiff/ops.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/parallel.hpp"

namespace ulrn::losses {

namespace {

const double kLogEps = std::log(static_cast<double>(ad::kLogEpsilon));

enum class Kind { kCrossEntropy, kAscent, kComplement, kRenormalized };

// Softmax pieces of one logit row: exponentials in float, sums and logs in
// double.
struct RowSoftmax {
  std::vector<float> e;  // exp(z - max)
  double total = 0.0;
  double log_total = 0.0;
  float max = 0.0f;

  RowSoftmax() = default;
  void fit(std::span<const float> z) {
    e.resize(z.size());
    max = z[0];
    for (float v : z) max = std::max(max, v);
    for (std::size_t i = 0; i < z.size(); ++i) e[i] = std::exp(z[i] - max);
    total = 0.0;
    for (float v : e) total += v;
    log_total = std::log(total);
  }
  double q(std::size_t v) const { return e[v] / total; }
  double log_q(std::span<const float> z, std::size_t v) const {
    return static_cast<double>(z[v] - max) - log_total;
  }
};

void check_ids(const ad::Tensor& logits, std::span<const TokenId> ids) {
  require(ids.size() >= 2, ErrorKind::kContract, "loss needs a sequence of length >= 2");
  require(logits.rank() == 2 && logits.dim(0) == ids.size() - 1, ErrorKind::kShape,
          "logits " + ad::shape_string(logits.shape()) + " do not match " +
              std::to_string(ids.size()) + " ids");
  const std::size_t v = logits.dim(1);
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      fail(ErrorKind::kIndex, "target " + std::to_string(ids[i]) + " outside vocabulary of " +
                                  std::to_string(v));
    }
  }
}

// Scalar node whose backward adds upstream * dz into the logits gradient.
ad::Tensor attach(const ad::Tensor& logits, double value, std::vector<float> dz) {
  auto grad = std::make_shared<std::vector<float>>(std::move(dz));
  ad::detail::Node* px = logits.node();
  return logits.graph().record({1}, {static_cast<float>(value)}, logits.requires_grad(),
                               [px, grad](const ad::detail::Node& self) {
                                 auto gx = px->grad_buffer();
                                 const float up = self.grad[0];
                                 for (std::size_t i = 0; i < gx.size(); ++i)
                                   gx[i] += up * (*grad)[i];
                               });
}

// Per-token mean of one target-indexed objective over the selected rows.
Term token_objective(const ad::Tensor& logits, std::span<const TokenId> ids,
                     std::span<const std::uint8_t> mask, Kind kind) {
  check_ids(logits, ids);
  require(mask.empty() || mask.size() == ids.size(), ErrorKind::kShape,
          "loss mask must have one entry per token");
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  std::size_t count = 0;
  for (std::size_t i = 1; i < ids.size(); ++i) count += mask.empty() || mask[i] ? 1 : 0;
  require(count > 0, ErrorKind::kContract, "loss mask selects no positions");

  const bool want_grad = logits.requires_grad();
  std::vector<float> dz(want_grad ? rows * v : 0, 0.0f);
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0.0;
  auto z_all = logits.data();
  RowSoftmax sm;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask.empty() && !mask[r + 1]) continue;
    const auto z = z_all.subspan(r * v, v);
    const std::size_t t = static_cast<std::size_t>(ids[r + 1]);
    sm.fit(z);
    double value = 0.0;
    double coeff = 0.0;  // dz_u = coeff * (q_u - delta_ut), zero when clamped
    if (kind == Kind::kCrossEntropy || kind == Kind::kAscent) {
      const double lq = sm.log_q(z, t);
      const bool clamped = lq < kLogEps;
      value = clamped ? -kLogEps : -lq;
      coeff = clamped ? 0.0 : 1.0;
      if (kind == Kind::kAscent) {
        value = -value;
        coeff = -coeff;
      }
    } else {
      // 1 - q_t as the mass of the other entries, which avoids cancellation.
      const double complement = (sm.total - sm.e[t]) / sm.total;
      const double offset = kind == Kind::kRenormalized ? std::log(static_cast<double>(v - 1)) : 0.0;
      const bool clamped = complement <= 0.0 || std::log(complement) - offset < kLogEps;
      value = clamped ? -kLogEps : offset - std::log(complement);
      // d(-log c)/dz_u = (q_t / c)(delta_ut - q_u)
      coeff = clamped ? 0.0 : -sm.q(t) / complement;
    }
    total += value;
    if (want_grad && coeff != 0.0) {
      float* row = dz.data() + r * v;
      const auto scale = static_cast<float>(coeff * inv / sm.total);
      for (std::size_t u = 0; u < v; ++u) row[u] = scale * sm.e[u];
      row[t] -= static_cast<float>(coeff * inv);
    }
  }
  const double mean = total * inv;
  return {attach(logits, mean, std::move(dz)), mean, count};
}

Kind forget_kind(ForgetLoss f) {
  switch (f) {
    case ForgetLoss::kLowerBounded: return Kind::kComplement;
    case ForgetLoss::kGradientAscent: return Kind::kAscent;
    case ForgetLoss::kRenormalized: return Kind::kRenormalized;
  }
  return Kind::kComplement;
}

ad::Tensor prefix_logits(model::ModelGraph& model, std::span<const TokenId> ids) {
  require(ids.size() >= 2, ErrorKind::kContract, "loss needs a sequence of length >= 2");
  return model.logits(ids.first(ids.size() - 1));
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {fgt, rpy, mtn}) {
    require(std::isfinite(w) && w >= 0.0, ErrorKind::kConfig,
            "loss weights must be finite and non-negative");
  }
}

std::string_view to_string(ForgetLoss f) {
  switch (f) {
    case ForgetLoss::kLowerBounded: return "lower_bounded";
    case ForgetLoss::kGradientAscent: return "gradient_ascent";
    case ForgetLoss::kRenormalized: return "renormalized";
  }
  return "lower_bounded";
}

ForgetLoss parse_forget_loss(std::string_view name) {
  if (name == "lower_bounded") return ForgetLoss::kLowerBounded;
  if (name == "gradient_ascent") return ForgetLoss::kGradientAscent;
  if (name == "renormalized") return ForgetLoss::kRenormalized;
  fail(ErrorKind::kConfig, "unknown forget_loss '" + std::string(name) + "'");
}

double cross_entropy(std::span<const float> probs, TokenId target) {
  require(!probs.empty(), ErrorKind::kContract, "empty probability vector");
  if (target < 0 || static_cast<std::size_t>(target) >= probs.size()) {
    fail(ErrorKind::kIndex, "target " + std::to_string(target) + " outside distribution of size " +
                                std::to_string(probs.size()));
  }
  double total = 0.0;
  for (float p : probs) total += p;
  require(std::abs(total - 1.0) <= 1e-5, ErrorKind::kContract,
          "probabilities sum to " + std::to_string(total));
  return -std::log(std::max<double>(probs[static_cast<std::size_t>(target)], ad::kLogEpsilon));
}

Term cross_entropy_from_logits(const ad::Tensor& logits, std::span<const TokenId> ids,
                               std::span<const std::uint8_t> mask) {
  return token_objective(logits, ids, mask, Kind::kCrossEntropy);
}

Term forgetting_from_logits(const ad::Tensor& logits, std::span<const TokenId> ids,
                            ForgetLoss kind) {
  return token_objective(logits, ids, {}, forget_kind(kind));
}

Term cross_entropy_term(model::ModelGraph& model, std::span<const TokenId> ids,
                        std::span<const std::uint8_t> mask) {
  return cross_entropy_from_logits(prefix_logits(model, ids), ids, mask);
}

Term forgetting_term(model::ModelGraph& model, std::span<const TokenId> ids, ForgetLoss kind) {
  return forgetting_from_logits(prefix_logits(model, ids), ids, kind);
}

Term mitigation_term(model::ModelGraph& model, const model::ModelParameters& reference,
                     std::span<const TokenId> ids, ad::Tensor logits) {
  require(reference.config() == model.config(), ErrorKind::kShape,
          "reference model config differs from the current one");
  if (!logits.valid()) logits = prefix_logits(model, ids);
  check_ids(logits, ids);
  const std::size_t rows = logits.dim(0), v = logits.dim(1);

  ad::Graph ref_graph;
  model::ModelGraph ref_model(ref_graph, reference, false);
  const ad::Tensor ref_logits = ref_model.logits(ids.first(ids.size() - 1));

  const bool want_grad = logits.requires_grad();
  std::vector<float> dz(want_grad ? rows * v : 0, 0.0f);
  const double inv = 1.0 / static_cast<double>(rows);
  double total = 0.0;
  RowSoftmax sp, sq;
  std::vector<std::uint8_t> open(v);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto zp = ref_logits.data().subspan(r * v, v);
    const auto zq = logits.data().subspan(r * v, v);
    sp.fit(zp);
    sq.fit(zq);
    double kl = 0.0, live = 0.0;
    for (std::size_t u = 0; u < v; ++u) {
      const double p = sp.q(u);
      const double lp = std::max(sp.log_q(zp, u), kLogEps);
      const double lq = sq.log_q(zq, u);
      open[u] = lq >= kLogEps ? 1 : 0;
      kl += p * (lp - std::max(lq, kLogEps));
      if (open[u]) live += p;
    }
    total += kl;
    if (want_grad) {
      // -d/dz_u of sum_v p_v log q_v over unclamped v: q_u * live - p_u
      float* row = dz.data() + r * v;
      for (std::size_t u = 0; u < v; ++u) {
        row[u] = static_cast<float>((sq.q(u) * live - (open[u] ? sp.q(u) : 0.0)) * inv);
      }
    }
  }
  const double mean = total * inv;
  return {attach(logits, mean, std::move(dz)), mean, rows};
}

namespace {

double value_of(const model::ModelParameters& params, const corpus::TokenSequence& seq,
                Kind kind) {
  ad::Graph g;
  model::ModelGraph m(g, params, false);
  return token_objective(prefix_logits(m, seq.ids), seq.ids, {}, kind).value;
}

}  // namespace

double forgetting_loss(const model::ModelParameters& params, const corpus::TokenSequence& seq,
                       ForgetLoss kind) {
  return value_of(params, seq, forget_kind(kind));
}

double gradient_ascent_loss(const model::ModelParameters& params,
                            const corpus::TokenSequence& seq) {
  return value_of(params, seq, Kind::kAscent);
}

double replay_loss(const model::ModelParameters& params, const corpus::TokenSequence& seq) {
  return value_of(params, seq, Kind::kCrossEntropy);
}

double bias_mitigation_loss(const model::ModelParameters& current,
                            const model::ModelParameters& original,
                            const corpus::TokenSequence& seq) {
  ad::Graph g;
  model::ModelGraph m(g, current, false);
  return mitigation_term(m, original, seq.ids).value;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size() && !p.empty(), ErrorKind::kShape,
          "KL needs two distributions of one size");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    kl += p[i] * (std::log(std::max(p[i], 1e-12)) - std::log(std::max(q[i], 1e-12)));
  }
  return kl;
}

UnlearnResult unlearning_loss(const model::ModelParameters& params,
                              const model::ModelParameters& original,
                              std::span<const corpus::TaggedSequence> synth_batch,
                              std::span<const corpus::TaggedSequence> nonsynth_batch,
                              const LossWeights& weights, ForgetLoss kind, bool with_gradients) {
  weights.validate();
  require(original.config() == params.config(), ErrorKind::kShape,
          "original model config differs from the current one");
  for (const auto& s : synth_batch) {
    require(s.source == corpus::Source::kSynthQA, ErrorKind::kData,
            "forgetting batch holds a " + std::string(corpus::to_string(s.source)) +
                " document (id " + std::to_string(s.doc_id) + ")");
  }
  for (const auto& s : nonsynth_batch) {
    require(s.source == corpus::Source::kNonSynth, ErrorKind::kData,
            "replay batch holds a " + std::string(corpus::to_string(s.source)) +
                " document (id " + std::to_string(s.doc_id) + ")");
  }

  const std::size_t ns = synth_batch.size(), nn = nonsynth_batch.size();
  struct Job {
    double a = 0.0, b = 0.0;
    std::size_t ta = 0, tb = 0;
    model::Gradients grads;
  };
  std::vector<Job> jobs(ns + nn);
  parallel_for(ns + nn, [&](std::size_t j) {
    ad::Graph g;
    model::ModelGraph m(g, params, with_gradients);
    Job& job = jobs[j];
    ad::Tensor loss;
    if (j < ns) {
      const auto& ids = synth_batch[j].tokens.ids;
      Term f = forgetting_term(m, ids, kind);
      job.a = f.value;
      job.ta = f.tokens;
      loss = ad::scale(f.loss, static_cast<float>(weights.fgt / ns));
    } else {
      const auto& ids = nonsynth_batch[j - ns].tokens.ids;
      ad::Tensor logits = prefix_logits(m, ids);
      Term r = cross_entropy_from_logits(logits, ids);
      Term k = mitigation_term(m, original, ids, logits);
      job.a = r.value;
      job.b = k.value;
      job.ta = r.tokens;
      job.tb = k.tokens;
      loss = ad::add(ad::scale(r.loss, static_cast<float>(weights.rpy / nn)),
                     ad::scale(k.loss, static_cast<float>(weights.mtn / nn)));
    }
    if (with_gradients) {
      g.backward(loss);
      job.grads = m.gradients();
    }
  });

  UnlearnResult out;
  LossBreakdown& b = out.breakdown;
  if (with_gradients) out.gradients = model::Gradients::zeros_like(params);
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const Job& job = jobs[j];
    if (j < ns) {
      b.fgt += job.a / ns;
      b.fgt_tokens += job.ta;
    } else {
      b.rpy += job.a / nn;
      b.mtn += job.b / nn;
      b.rpy_tokens += job.ta;
      b.mtn_tokens += job.tb;
    }
    if (with_gradients) out.gradients.add_scaled(job.grads, 1.0f);
  }
  b.total = weights.fgt * b.fgt + weights.rpy * b.rpy + weights.mtn * b.mtn;
  return out;
}

}  // namespace ulrn::losses
