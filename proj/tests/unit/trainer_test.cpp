#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tiny.hpp"
#include "ulrn/trainer/optimizer.hpp"
#include "ulrn/trainer/trainer.hpp"

using namespace ulrn;
using namespace ulrn::trainer;
using corpus::Source;
using testing::kind_of;
using testing::tagged;

namespace {

TrainConfig tiny_train(Stage stage, std::size_t steps) {
  auto c = default_config(stage);
  c.model = testing::tiny_config();
  c.context = 16;
  c.batch_size = 4;
  c.steps = steps;
  c.lr = 1e-2;
  c.init_std = 0.1f;
  return c;
}

std::vector<corpus::TaggedSequence> repeating(Source src, std::size_t docs) {
  // A period-4 pattern the tiny model can learn quickly.
  std::vector<corpus::TaggedSequence> out;
  for (std::size_t d = 0; d < docs; ++d) {
    corpus::TokenSequence s;
    s.ids.push_back(0);
    for (std::size_t i = 0; i < 15; ++i) s.ids.push_back(static_cast<corpus::TokenId>(4 + (i + d) % 4));
    out.push_back({src, d, s});
  }
  return out;
}

}  // namespace

TEST_CASE("cosine schedule with warmup") {
  auto c = default_config(Stage::kPretrain);
  c.lr = 1.0;
  c.warmup_fraction = 0.1;
  c.min_lr_fraction = 0.1;
  const std::size_t total = 100;
  CHECK(warmup_steps(c, total) == 10);
  CHECK(learning_rate(c, 0, total) == doctest::Approx(0.1));
  CHECK(learning_rate(c, 9, total) == doctest::Approx(1.0));
  CHECK(learning_rate(c, 10, total) == doctest::Approx(1.0));
  CHECK(learning_rate(c, 99, total) == doctest::Approx(0.1));
  // Midpoint of the decay span.
  const double mid = 0.1 + 0.9 * 0.5 * (1 + std::cos(std::numbers::pi * 44.5 / 89.0));
  CHECK(learning_rate(c, 54, total) == doctest::Approx(0.1 + 0.9 * 0.5 * (1 + std::cos(std::numbers::pi * 44.0 / 89.0))));
  CHECK(mid == doctest::Approx(0.55));
  for (std::size_t s = 11; s < total; ++s) CHECK(learning_rate(c, s, total) <= learning_rate(c, s - 1, total));
  CHECK(kind_of([&] { learning_rate(c, total, total); }) == ErrorKind::kIndex);

  auto f = default_config(Stage::kUnlearn);
  CHECK(f.schedule == Schedule::kFixed);
  CHECK(learning_rate(f, 12345, 0) == f.lr);
  CHECK(warmup_steps(f, 1000) == 0);
}

TEST_CASE("stage defaults keep the learning-rate ratios") {
  const double pre = default_config(Stage::kPretrain).lr;
  CHECK(default_config(Stage::kContinuedPretrain).lr == doctest::Approx(pre / 2));
  CHECK(default_config(Stage::kSFT).lr == doctest::Approx(pre / 5));
  CHECK(default_config(Stage::kUnlearn).lr == doctest::Approx(pre / 2));
  const auto u = default_config(Stage::kUnlearn);
  CHECK(u.weights.fgt == 0.01);
  CHECK(u.weights.rpy == 1.0);
  CHECK(u.weights.mtn == 1.0);
  CHECK(u.optimizer.beta2 == 0.95);
}

TEST_CASE("config text round trip and rejection") {
  const auto c = parse_config(
      "# unlearning\nstage = unlearn\nlr = 1e-4\nforget_loss = gradient_ascent\n"
      "w_fgt = 0.5\nforget_token_budget = 100\n");
  CHECK(c.lr == 1e-4);
  CHECK(c.weights.fgt == 0.5);
  CHECK(c.forget_loss == losses::ForgetLoss::kGradientAscent);
  CHECK(to_text(parse_config(to_text(c))) == to_text(c));
  CHECK(config_hash(c) == config_hash(parse_config(to_text(c))));
  CHECK(config_hash(c) != config_hash(default_config(Stage::kUnlearn)));

  for (const char* bad : {"lr = 1\n", "stage = pretrain\nbogus = 1\n", "stage = pretrain\nlr = 1\nlr = 2\n",
                          "stage = pretrain\nlr = abc\n", "stage = pretrain\nsteps = -3\n",
                          "stage = pretrain\nlr\n", "stage = flying\n", "stage = pretrain\nlr = 0\n",
                          "stage = unlearn\nschedule = cosine\n",
                          "stage = pretrain\ncontext = 4096\n"}) {
    CAPTURE(bad);
    CHECK(kind_of([&] { parse_config(bad); }) == ErrorKind::kConfig);
  }
}

TEST_CASE("gradient clipping") {
  model::Gradients g;
  g.values = {{3.0f, 0.0f}, {4.0f}};
  CHECK(clip_gradients(g, 10.0) == doctest::Approx(5.0));
  CHECK(g.values[0][0] == 3.0f);
  CHECK(clip_gradients(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(g.values[1][0] == doctest::Approx(0.8));
}

TEST_CASE("AdamW matches a scalar reference and skips decay on gains") {
  auto p = testing::tiny_model(1);
  const auto before = p;
  OptimizerConfig oc;
  AdamW opt(p, oc);
  auto g = model::Gradients::zeros_like(p);
  for (auto& v : g.values)
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01f * static_cast<float>(i % 7) - 0.02f;
  const double lr = 1e-2;
  opt.step(p, g, lr);
  opt.step(p, g, lr);
  CHECK(opt.steps_taken() == 2);

  for (std::size_t k = 0; k < p.tensors().size(); ++k) {
    const bool matrix = p.tensors()[k].shape.size() >= 2;
    for (std::size_t i : {0u, 3u, 5u}) {
      double w = (*before.tensors()[k].values)[i], m = 0, v = 0;
      const double gi = g.values[k][i];
      for (int t = 1; t <= 2; ++t) {
        m = 0.9 * m + 0.1 * gi;
        v = 0.95 * v + 0.05 * gi * gi;
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.95, t));
        w -= lr * (mh / (std::sqrt(vh) + 1e-8) + (matrix ? 0.1 : 0.0) * w);
      }
      CHECK((*p.tensors()[k].values)[i] == doctest::Approx(w).epsilon(1e-5));
    }
  }
}

TEST_CASE("windows and assistant mask") {
  corpus::TokenSequence s;
  for (int i = 0; i < 11; ++i) s.ids.push_back(i);
  std::vector<corpus::TaggedSequence> data = {{Source::kNonSynth, 1, s}};
  const auto w = make_windows(data, 4);
  REQUIRE(w.size() == 3);  // 4 + 4 + 3
  CHECK(w[2].tokens.ids == std::vector<corpus::TokenId>{8, 9, 10});
  corpus::TokenSequence t;
  for (int i = 0; i < 9; ++i) t.ids.push_back(i);
  std::vector<corpus::TaggedSequence> d2 = {{Source::kNonSynth, 2, t}};
  CHECK(make_windows(d2, 4).size() == 2);  // trailing single token dropped

  const std::vector<corpus::TokenId> ids = {0, 5, 6, 2, 7, 8};
  CHECK(assistant_mask(ids, 2) == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1});
}

TEST_CASE("pretraining lowers the loss and is deterministic") {
  const auto data = repeating(Source::kNonSynth, 16);
  const auto c = tiny_train(Stage::kPretrain, 60);
  const auto a = pretrain(c, data);
  const auto b = pretrain(c, data);
  CHECK(a.params.checksum() == b.params.checksum());
  REQUIRE(a.record.steps.size() == 60);
  CHECK(a.record.steps.back().loss.total < 0.5 * a.record.steps.front().loss.total);
  CHECK(a.record.final_checksum == a.params.checksum());
  CHECK(a.record.csv().rfind("# ulrn ", 0) == 0);
  CHECK(a.record.to_json()["stage"] == "pretrain");
  for (const auto& s : a.record.steps) CHECK(std::isfinite(s.grad_norm));
}

TEST_CASE("continued pretraining reports its SynthQA share") {
  auto data = repeating(Source::kNonSynth, 9);
  data.push_back(tagged(Source::kSynthQA, 99, 16));
  const auto base = pretrain(tiny_train(Stage::kPretrain, 5), data);
  const auto r = continued_pretrain(base.params, tiny_train(Stage::kContinuedPretrain, 5), data);
  CHECK(r.record.synth_token_fraction == doctest::Approx(0.1));
  CHECK(kind_of([&] { continued_pretrain(base.params, tiny_train(Stage::kSFT, 5), data); }) ==
        ErrorKind::kConfig);
}

TEST_CASE("sft rejects non-instruction data and derives steps from epochs") {
  const auto base = testing::tiny_model(2);
  auto c = tiny_train(Stage::kSFT, 0);
  c.epochs = 2;
  std::vector<corpus::TaggedSequence> inst;
  for (std::uint64_t d = 0; d < 6; ++d) {
    auto s = tagged(Source::kInstruct, d, 12);
    s.tokens.ids[5] = 2;  // assistant marker
    inst.push_back(s);
  }
  const auto r = sft(base, c, inst, 2);
  CHECK(r.record.steps.size() == 3);  // ceil(2 * 6 / 4)
  inst[0].source = Source::kNonSynth;
  CHECK(kind_of([&] { sft(base, c, inst, 2); }) == ErrorKind::kData);
  inst[0].source = Source::kInstruct;
  inst[0].tokens.ids[5] = 9;
  CHECK(kind_of([&] { sft(base, c, inst, 2); }) == ErrorKind::kData);
}

TEST_CASE("unlearning consumes the forget-token budget and keeps the reference intact") {
  const auto base = testing::tiny_model(3);
  std::vector<corpus::TaggedSequence> synth, replay;
  for (std::uint64_t d = 0; d < 4; ++d) synth.push_back(tagged(Source::kSynthQA, d, 16));
  for (std::uint64_t d = 0; d < 8; ++d) replay.push_back(tagged(Source::kNonSynth, 10 + d, 16));
  auto c = tiny_train(Stage::kUnlearn, 0);
  c.batch_size = 2;
  c.forget_token_budget = 100;
  const auto r = unlearn(base, c, synth, replay);
  // 32 forget tokens per step: four steps reach 128 >= 100.
  CHECK(r.record.steps.size() == 4);
  CHECK(r.record.reference_checksum == base.checksum());
  CHECK(r.record.forget_repetitions == doctest::Approx(2.0));
  for (const auto& s : r.record.steps) CHECK(s.loss.fgt >= 0.0);

  // With w_fgt = 0 the forgetting batch has no influence on the update.
  c.weights.fgt = 0.0;
  auto other = synth;
  for (auto& s : other) s.tokens.ids[3] = 5;
  CHECK(unlearn(base, c, synth, replay).params.checksum() ==
        unlearn(base, c, other, replay).params.checksum());

  CHECK(kind_of([&] { unlearn(base, c, replay, replay); }) == ErrorKind::kData);
}

TEST_CASE("divergence aborts training") {
  const auto data = repeating(Source::kNonSynth, 8);
  auto c = tiny_train(Stage::kPretrain, 40);
  c.lr = 50.0;
  c.optimizer.grad_clip = 1e6;
  c.divergence_factor = 1.01;
  c.divergence_window = 3;
  CHECK(kind_of([&] { pretrain(c, data); }) == ErrorKind::kDivergence);
  // A healthy run never trips the same tight detector.
  c.lr = 1e-2;
  c.optimizer.grad_clip = 1.0;
  CHECK_NOTHROW(pretrain(c, data));
}
