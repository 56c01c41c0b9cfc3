#include <benchmark/benchmark.h>

#include <random>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/autodiff/ops.hpp"
#include "ulrn/losses/losses.hpp"
#include "ulrn/model/transformer.hpp"
#include "ulrn/parallel.hpp"

using namespace ulrn;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

model::ModelConfig desk_config() {
  model::ModelConfig c;
  c.vocab_size = 2048;
  c.hidden_size = 64;
  c.ffn_size = 170;
  c.n_heads = 4;
  c.n_layers = 2;
  c.max_context = 128;
  return c;
}

corpus::TokenSequence sequence(std::size_t n, std::size_t vocab) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(4, static_cast<int>(vocab) - 1);
  corpus::TokenSequence s;
  s.ids.push_back(corpus::kBos);
  while (s.ids.size() < n) s.ids.push_back(pick(rng));
  return s;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  for (auto _ : state) {
    ad::Graph g;
    auto x = g.constant({n, n}, a);
    auto y = g.constant({n, n}, b);
    benchmark::DoNotOptimize(ad::matmul(x, y).data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  for (auto _ : state) {
    ad::Graph g;
    auto x = g.variable({n, n}, a);
    auto y = g.variable({n, n}, b);
    auto loss = ad::sum(ad::matmul(x, y));
    g.backward(loss);
    benchmark::DoNotOptimize(x.grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128);

void BM_Forward(benchmark::State& state) {
  set_thread_count(1);
  const auto params = model::ModelParameters::initialize(desk_config(), 1, 0.02f);
  const auto seq = sequence(static_cast<std::size_t>(state.range(0)), 2048);
  for (auto _ : state) benchmark::DoNotOptimize(model::token_log_probs(params, seq.ids));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128);

void BM_ForwardBackward(benchmark::State& state) {
  set_thread_count(1);
  const auto params = model::ModelParameters::initialize(desk_config(), 1, 0.02f);
  const auto seq = sequence(static_cast<std::size_t>(state.range(0)), 2048);
  for (auto _ : state) {
    ad::Graph g;
    model::ModelGraph m(g, params, true);
    auto term = losses::cross_entropy_term(m, seq.ids);
    g.backward(term.loss);
    benchmark::DoNotOptimize(m.gradients());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(128);

void BM_UnlearnStep(benchmark::State& state) {
  set_thread_count(1);
  const auto params = model::ModelParameters::initialize(desk_config(), 1, 0.02f);
  const auto original = model::ModelParameters::initialize(desk_config(), 2, 0.02f);
  std::vector<corpus::TaggedSequence> synth = {{corpus::Source::kSynthQA, 1, sequence(128, 2048)}};
  std::vector<corpus::TaggedSequence> keep = {{corpus::Source::kNonSynth, 2, sequence(128, 2048)}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(losses::unlearning_loss(params, original, synth, keep, {}));
  }
}
BENCHMARK(BM_UnlearnStep);

void BM_Tsne(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<float>> x;
  for (std::size_t i = 0; i < n; ++i) x.push_back(noise(64, i));
  analysis::TsneOptions o;
  o.iterations = 100;
  o.perplexity = 10;
  for (auto _ : state) benchmark::DoNotOptimize(analysis::tsne(x, o));
}
BENCHMARK(BM_Tsne)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_Kde(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 5);
  std::vector<double> s(x.begin(), x.end());
  for (auto _ : state) benchmark::DoNotOptimize(analysis::kde(s));
}
BENCHMARK(BM_Kde)->Arg(200)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
