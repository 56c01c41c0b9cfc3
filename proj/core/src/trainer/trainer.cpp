#include "ulrn/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <cstdio>
#include <random>

#include "ulrn/autodiff/ops.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/parallel.hpp"
#include "ulrn/trainer/optimizer.hpp"

namespace ulrn::trainer {

namespace {

// Visits examples in a fresh seeded permutation on every pass.
class Sampler {
 public:
  Sampler(std::size_t count, std::uint64_t seed) : order_(count), rng_(seed) {
    require(count > 0, ErrorKind::kData, "no training examples");
    reshuffle();
  }

  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    ++drawn_;
    return order_[pos_++];
  }

  double passes() const { return static_cast<double>(drawn_) / static_cast<double>(order_.size()); }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
  std::size_t drawn_ = 0;
};

struct StepOutcome {
  losses::LossBreakdown loss;
  model::Gradients grads;
  std::size_t tokens = 0;
  double monitored = 0.0;  // value watched by the divergence detector
};

using StepFn = std::function<StepOutcome(std::size_t step)>;
using DoneFn = std::function<bool()>;

class DivergenceDetector {
 public:
  explicit DivergenceDetector(const TrainConfig& c) : factor_(c.divergence_factor), window_(c.divergence_window) {}

  void observe(std::size_t step, double loss) {
    if (step == 0) {
      initial_ = loss;
      return;
    }
    run_ = loss > factor_ * initial_ ? run_ + 1 : 0;
    if (window_ > 0 && run_ >= window_) {
      fail(ErrorKind::kDivergence,
           "loss " + std::to_string(loss) + " above " + std::to_string(factor_) + " x initial " +
               std::to_string(initial_) + " for " + std::to_string(run_) +
               " consecutive steps (step " + std::to_string(step) + ")");
    }
  }

 private:
  double factor_;
  std::size_t window_;
  double initial_ = 0.0;
  std::size_t run_ = 0;
};

// Shared optimization loop. total == 0 runs until done() (fixed schedule only).
RunRecord optimize(model::ModelParameters& params, const TrainConfig& config, std::size_t total,
                   const StepFn& fn, const DoneFn& done) {
  const auto started = std::chrono::steady_clock::now();
  RunRecord record;
  record.config = config;
  record.warmup_steps = total > 0 ? warmup_steps(config, total) : 0;
  record.initial_checksum = params.checksum();
  AdamW opt(params, config.optimizer);
  DivergenceDetector detector(config);
  std::size_t tokens = 0;
  for (std::size_t step = 0; total > 0 ? step < total : !done(); ++step) {
    StepOutcome out = fn(step);
    detector.observe(step, out.monitored);
    const double norm = clip_gradients(out.grads, config.optimizer.grad_clip);
    const double lr = learning_rate(config, step, std::max<std::size_t>(total, 1));
    opt.step(params, out.grads, lr);
    tokens += out.tokens;
    record.steps.push_back({step, out.loss, lr, norm, tokens});
  }
  record.final_checksum = params.checksum();
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

// Mean per-window cross-entropy over a batch and its gradient. Windows run in
// parallel; gradients are reduced in batch order.
StepOutcome lm_step(const model::ModelParameters& params,
                    std::span<const corpus::TaggedSequence> windows,
                    std::span<const std::vector<std::uint8_t>> masks,
                    const std::vector<std::size_t>& batch) {
  const std::size_t b = batch.size();
  std::vector<model::Gradients> grads(b);
  std::vector<double> values(b);
  parallel_for(b, [&](std::size_t j) {
    ad::Graph g;
    model::ModelGraph m(g, params, true);
    const auto& ids = windows[batch[j]].tokens.ids;
    std::span<const std::uint8_t> mask;
    if (!masks.empty()) mask = masks[batch[j]];
    losses::Term t = losses::cross_entropy_term(m, ids, mask);
    values[j] = t.value;
    g.backward(ad::scale(t.loss, 1.0f / static_cast<float>(b)));
    grads[j] = m.gradients();
  });
  StepOutcome out;
  out.grads = model::Gradients::zeros_like(params);
  for (std::size_t j = 0; j < b; ++j) {
    out.loss.rpy += values[j] / static_cast<double>(b);
    out.loss.rpy_tokens += windows[batch[j]].tokens.size() - 1;
    out.tokens += windows[batch[j]].tokens.size();
    out.grads.add_scaled(grads[j], 1.0f);
  }
  out.loss.total = out.loss.rpy;
  out.monitored = out.loss.total;
  return out;
}

std::vector<std::size_t> draw(Sampler& s, std::size_t n) {
  std::vector<std::size_t> batch(n);
  for (auto& i : batch) i = s.next();
  return batch;
}

double synth_fraction(std::span<const corpus::TaggedSequence> windows) {
  std::size_t synth = 0, total = 0;
  for (const auto& w : windows) {
    total += w.tokens.size();
    if (w.source == corpus::Source::kSynthQA) synth += w.tokens.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(synth) / static_cast<double>(total);
}

void check_stage(const TrainConfig& config, Stage expected) {
  config.validate();
  require(config.stage == expected, ErrorKind::kConfig,
          "config is for stage '" + std::string(to_string(config.stage)) + "', expected '" +
              std::string(to_string(expected)) + "'");
}

void check_base(const model::ModelParameters& base, const TrainConfig& config) {
  require(config.context <= base.config().max_context, ErrorKind::kConfig,
          "context " + std::to_string(config.context) + " exceeds the model's max_context " +
              std::to_string(base.config().max_context));
}

TrainResult lm_stage(model::ModelParameters params, const TrainConfig& config,
                     std::span<const corpus::TaggedSequence> data) {
  check_base(params, config);
  const auto windows = make_windows(data, config.context);
  Sampler sampler(windows.size(), config.seed);
  auto record = optimize(params, config, config.steps,
                         [&](std::size_t) {
                           return lm_step(params, windows, {}, draw(sampler, config.batch_size));
                         },
                         {});
  record.examples = windows.size();
  record.synth_token_fraction = synth_fraction(windows);
  return {std::move(params), std::move(record)};
}

}  // namespace

std::vector<corpus::TaggedSequence> make_windows(std::span<const corpus::TaggedSequence> data,
                                                 std::size_t context) {
  require(context >= 2, ErrorKind::kConfig, "context must be at least 2");
  std::vector<corpus::TaggedSequence> out;
  for (const auto& seq : data) {
    const auto& ids = seq.tokens.ids;
    for (std::size_t begin = 0; begin + 1 < ids.size(); begin += context) {
      const std::size_t end = std::min(ids.size(), begin + context);
      if (end - begin < 2) break;
      out.push_back({seq.source, seq.doc_id,
                     corpus::TokenSequence{{ids.begin() + static_cast<std::ptrdiff_t>(begin),
                                            ids.begin() + static_cast<std::ptrdiff_t>(end)}}});
    }
  }
  return out;
}

std::vector<std::uint8_t> assistant_mask(std::span<const corpus::TokenId> ids,
                                         corpus::TokenId assistant_marker) {
  std::vector<std::uint8_t> mask(ids.size(), 0);
  bool inside = false;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    mask[i] = inside ? 1 : 0;
    if (ids[i] == assistant_marker) inside = true;
  }
  return mask;
}

TrainResult pretrain(const TrainConfig& config, std::span<const corpus::TaggedSequence> data) {
  check_stage(config, Stage::kPretrain);
  return lm_stage(model::ModelParameters::initialize(config.model, config.seed, config.init_std),
                  config, data);
}

TrainResult continued_pretrain(const model::ModelParameters& base, const TrainConfig& config,
                               std::span<const corpus::TaggedSequence> mixed) {
  check_stage(config, Stage::kContinuedPretrain);
  return lm_stage(base, config, mixed);
}

TrainResult sft(const model::ModelParameters& base, const TrainConfig& config,
                std::span<const corpus::TaggedSequence> instruct,
                corpus::TokenId assistant_marker) {
  check_stage(config, Stage::kSFT);
  check_base(base, config);
  std::vector<corpus::TaggedSequence> windows;
  std::vector<std::vector<std::uint8_t>> masks;
  for (const auto& seq : instruct) {
    require(seq.source == corpus::Source::kInstruct, ErrorKind::kData,
            "sft data holds a " + std::string(corpus::to_string(seq.source)) + " document (id " +
                std::to_string(seq.doc_id) + ")");
    const auto& ids = seq.tokens.ids;
    corpus::TaggedSequence w{seq.source, seq.doc_id,
                             corpus::TokenSequence{{ids.begin(),
                                                    ids.begin() + static_cast<std::ptrdiff_t>(
                                                                      std::min(ids.size(), config.context))}}};
    auto mask = assistant_mask(w.tokens.ids, assistant_marker);
    require(std::find(mask.begin() + 1, mask.end(), 1) != mask.end(), ErrorKind::kData,
            "instruction document " + std::to_string(seq.doc_id) +
                " has no assistant tokens within the context window");
    windows.push_back(std::move(w));
    masks.push_back(std::move(mask));
  }
  require(!windows.empty(), ErrorKind::kData, "no instruction documents");
  const std::size_t total =
      config.steps > 0 ? config.steps
                       : (config.epochs * windows.size() + config.batch_size - 1) / config.batch_size;
  model::ModelParameters params = base;
  Sampler sampler(windows.size(), config.seed);
  auto record = optimize(params, config, total,
                         [&](std::size_t) {
                           return lm_step(params, windows, masks, draw(sampler, config.batch_size));
                         },
                         {});
  record.examples = windows.size();
  return {std::move(params), std::move(record)};
}

TrainResult unlearn(const model::ModelParameters& synth_model, const TrainConfig& config,
                    std::span<const corpus::TaggedSequence> synth,
                    std::span<const corpus::TaggedSequence> replay) {
  check_stage(config, Stage::kUnlearn);
  check_base(synth_model, config);
  const model::FrozenModel original(synth_model);
  model::ModelParameters params = synth_model;
  const auto forget = make_windows(synth, config.context);
  const auto keep = make_windows(replay, config.context);
  Sampler forget_sampler(forget.size(), config.seed);
  Sampler keep_sampler(keep.size(), config.seed ^ 0x5bd1e995ULL);
  std::size_t forget_tokens = 0;

  auto step_fn = [&](std::size_t) {
    std::vector<corpus::TaggedSequence> a, b;
    for (std::size_t i : draw(forget_sampler, config.batch_size)) a.push_back(forget[i]);
    for (std::size_t i : draw(keep_sampler, config.batch_size)) b.push_back(keep[i]);
    auto r = losses::unlearning_loss(params, original.params(), a, b, config.weights,
                                     config.forget_loss);
    StepOutcome out;
    out.loss = r.breakdown;
    out.grads = std::move(r.gradients);
    for (const auto& s : a) out.tokens += s.tokens.size();
    forget_tokens += out.tokens;
    for (const auto& s : b) out.tokens += s.tokens.size();
    out.monitored = r.breakdown.rpy;
    return out;
  };
  const std::size_t total = config.steps;
  auto record = optimize(params, config, total, step_fn,
                         [&] { return forget_tokens >= config.forget_token_budget; });
  original.verify();
  record.examples = forget.size() + keep.size();
  record.synth_token_fraction = synth_fraction(forget);
  record.forget_repetitions = forget_sampler.passes();
  record.forget_tokens = forget_tokens;
  record.reference_checksum = original.checksum();
  return {std::move(params), std::move(record)};
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string RunRecord::csv() const {
  const bool unlearning = config.stage == Stage::kUnlearn;
  std::string out = "# ulrn " ULRN_VERSION " config " + config_hash(config) + "\n";
  out += "step,fgt,rpy,mtn,total,lr,grad_norm,tokens_seen\n";
  for (const StepLog& s : steps) {
    out += std::to_string(s.step) + ',' + (unlearning ? num(s.loss.fgt) : "") + ',' +
           num(s.loss.rpy) + ',' + (unlearning ? num(s.loss.mtn) : "") + ',' +
           num(s.loss.total) + ',' + num(s.lr) + ',' + num(s.grad_norm) + ',' +
           std::to_string(s.tokens_seen) + '\n';
  }
  return out;
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json j;
  j["tool"] = "ulrn";
  j["version"] = ULRN_VERSION;
  j["stage"] = to_string(config.stage);
  j["config_hash"] = config_hash(config);
  nlohmann::json cfg = nlohmann::json::object();
  const std::string text = to_text(config);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    const std::size_t eq = line.find(" = ");
    cfg[line.substr(0, eq)] = line.substr(eq + 3);
    pos = nl + 1;
  }
  j["config"] = cfg;
  j["schedule"] = {{"kind", to_string(config.schedule)},
                   {"peak_lr", config.lr},
                   {"warmup_steps", warmup_steps}};
  if (config.stage == Stage::kUnlearn) {
    j["weights"] = {{"w_fgt", config.weights.fgt},
                    {"w_rpy", config.weights.rpy},
                    {"w_mtn", config.weights.mtn}};
    j["forget_loss"] = losses::to_string(config.forget_loss);
    j["forget_token_budget"] = config.forget_token_budget;
    j["forget_repetitions"] = forget_repetitions;
    j["forget_tokens"] = forget_tokens;
    j["reference_checksum"] = reference_checksum;
  }
  if (config.stage == Stage::kSFT) j["epochs"] = config.epochs;
  j["steps_run"] = steps.size();
  j["tokens_seen"] = steps.empty() ? 0 : steps.back().tokens_seen;
  j["examples"] = examples;
  j["synth_token_fraction"] = synth_token_fraction;
  j["initial_checksum"] = initial_checksum;
  j["final_checksum"] = final_checksum;
  j["log_epsilon"] = static_cast<double>(ad::kLogEpsilon);
  j["seed"] = config.seed;
  j["threads"] = thread_count();
  j["wall_seconds"] = wall_seconds;
  j["checkpoint"] = checkpoint;
  nlohmann::json curves;
  for (const char* k : {"fgt", "rpy", "mtn", "total"}) curves[k] = nlohmann::json::array();
  for (const StepLog& s : steps) {
    curves["fgt"].push_back(s.loss.fgt);
    curves["rpy"].push_back(s.loss.rpy);
    curves["mtn"].push_back(s.loss.mtn);
    curves["total"].push_back(s.loss.total);
  }
  j["curves"] = curves;
  if (!steps.empty()) j["final_loss"] = steps.back().loss.total;
  return j;
}

}  // namespace ulrn::trainer
