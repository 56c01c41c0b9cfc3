#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tiny.hpp"
#include "ulrn/autodiff/ops.hpp"
#include "ulrn/corpus/vocabulary.hpp"
#include "ulrn/hashing.hpp"

using namespace ulrn;
using namespace ulrn::model;
using testing::kind_of;
using testing::random_sequence;
using testing::tiny_config;
using testing::tiny_model;

TEST_CASE("layout lists every tensor in storage order") {
  const auto layout = ModelParameters::layout(tiny_config());
  REQUIRE(layout.size() == 1 + 9 + 2);
  CHECK(layout.front().first == "tok_embedding");
  CHECK(layout.front().second == ad::Shape{32, 16});
  CHECK(layout.back().first == "output");
  CHECK(layout.back().second == ad::Shape{16, 32});
  auto gelu = tiny_config();
  gelu.activation = Activation::kGELU;
  CHECK(ModelParameters::layout(gelu).size() == 1 + 8 + 2);
  CHECK(tiny_model().parameter_count() == 32 * 16 * 2 + 16 * 3 + 4 * 16 * 16 + 3 * 16 * 24);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.n_heads = 3;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::kConfig);
  c = tiny_config();
  c.hidden_size = 18;  // head_dim 9 is odd
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::kConfig);
  c = tiny_config();
  c.vocab_size = 4;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_activation("relu"); }) == ErrorKind::kConfig);
}

TEST_CASE("initialization is seeded and deep copies do not alias") {
  const auto a = tiny_model(3), b = tiny_model(3), c = tiny_model(4);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != c.checksum());
  auto copy = a;
  (*copy.mutable_tensors()[0].values)[0] += 1.0f;
  CHECK(copy.checksum() != a.checksum());
  CHECK(a.tensor("layers.0.attn_norm").values->at(0) == 1.0f);
  CHECK(kind_of([&] { a.tensor("nope"); }) == ErrorKind::kIndex);
}

TEST_CASE("next-token distributions are causal and normalized") {
  const auto p = tiny_model();
  auto seq = random_sequence(5, 10);
  const auto before = next_token_probs(p, seq, 4);
  double total = 0.0;
  for (float v : before) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
  seq.ids[7] = 9;
  seq.ids[8] = 10;
  CHECK(next_token_probs(p, seq, 4) == before);
  CHECK(kind_of([&] { next_token_probs(p, seq, 0); }) == ErrorKind::kIndex);
}

TEST_CASE("sequences beyond the context are rejected") {
  const auto p = tiny_model();
  ad::Graph g;
  ModelGraph mg(g, p, false);
  const auto long_seq = random_sequence(1, 17);
  CHECK(kind_of([&] { mg.logits(long_seq.ids); }) == ErrorKind::kLength);
  corpus::TokenSequence bad{{0, 40, 5}};
  CHECK(kind_of([&] { token_log_probs(p, bad.ids); }) == ErrorKind::kVocabulary);
}

TEST_CASE("a zero output projection predicts uniformly: perplexity equals V") {
  auto p = tiny_model();
  auto& out = *p.mutable_tensors()[p.index_of("output")].values;
  std::fill(out.begin(), out.end(), 0.0f);
  CHECK(sequence_perplexity(p, random_sequence(2, 12)) == doctest::Approx(32.0).epsilon(1e-5));
}

TEST_CASE("batched forward matches per-sequence logits") {
  const auto p = tiny_model();
  const corpus::TokenSequence batch[] = {random_sequence(1, 6), random_sequence(2, 6)};
  ad::Graph g;
  const auto logits = forward(g, p, batch);
  CHECK(logits.shape() == ad::Shape{2, 6, 32});
  ad::Graph g2;
  ModelGraph mg(g2, p, false);
  const auto single = mg.logits(batch[1].ids);
  for (std::size_t i = 0; i < 6 * 32; ++i) {
    CHECK(logits.data()[6 * 32 + i] == doctest::Approx(single.data()[i]).epsilon(1e-5));
  }
}

TEST_CASE("embeddings pool over non-PAD positions") {
  const auto p = tiny_model();
  corpus::TokenSequence s{{0, 5, 6, 7}};
  const auto e = last_hidden_embedding(p, s);
  CHECK(e.size() == 16);
  corpus::TokenSequence padded{{0, 5, 6, 7, corpus::kPad, corpus::kPad}};
  const auto ep = last_hidden_embedding(p, padded);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(ep[i] == doctest::Approx(e[i]).epsilon(1e-5));
}

TEST_CASE("checkpoints round trip and reject damage") {
  const auto p = tiny_model(9);
  const std::string bytes = serialize_checkpoint(p);
  const auto back = parse_checkpoint(bytes);
  CHECK(back.checksum() == p.checksum());
  CHECK(back.config() == p.config());
  CHECK(serialize_checkpoint(back) == bytes);

  CHECK(kind_of([&] { parse_checkpoint(bytes.substr(0, bytes.size() - 9)); }) ==
        ErrorKind::kTruncated);
  CHECK(kind_of([&] { parse_checkpoint(bytes.substr(0, 3)); }) == ErrorKind::kTruncated);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK(kind_of([&] { parse_checkpoint(magic); }) == ErrorKind::kFormat);
  std::string flipped = bytes;
  flipped[bytes.size() - 20] ^= 0x40;
  CHECK(kind_of([&] { parse_checkpoint(flipped); }) == ErrorKind::kIntegrity);
  CHECK(kind_of([&] { parse_checkpoint(bytes + "x"); }) == ErrorKind::kFormat);

  const auto dir = std::filesystem::temp_directory_path() / "ulrn_model_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(p, dir / "p.ulrn");
  CHECK(load_checkpoint(dir / "p.ulrn").checksum() == p.checksum());
  auto other = tiny_config();
  other.ffn_size = 20;
  try {
    load_checkpoint(dir / "p.ulrn", other);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
    CHECK(std::string(e.what()).find("w_gate") != std::string::npos);
  }
  CHECK(kind_of([&] { load_checkpoint(dir / "missing.ulrn"); }) == ErrorKind::kIo);
  std::filesystem::remove_all(dir);
}

TEST_CASE("frozen models detect nothing wrong when untouched") {
  const auto p = tiny_model();
  const FrozenModel f(p);
  CHECK(f.checksum() == p.checksum());
  CHECK_NOTHROW(f.verify());
}

TEST_CASE("model gradients match finite differences of the mean cross-entropy") {
  const auto base = tiny_model(2, 0.2f);
  const auto seq = random_sequence(3, 8);
  auto loss_of = [&](const ModelParameters& p) {
    double s = 0.0;
    const auto lp = token_log_probs(p, seq.ids);
    for (double v : lp) s -= v;
    return s / static_cast<double>(lp.size());
  };
  ad::Graph g;
  ModelGraph mg(g, base, true);
  const auto logits = mg.logits(std::span(seq.ids).first(seq.size() - 1));
  std::vector<std::int32_t> targets(seq.ids.begin() + 1, seq.ids.end());
  const auto nll = ad::neg(ad::mean(ad::log(ad::pick(ad::softmax(logits), targets))));
  g.backward(nll);
  const auto grads = mg.gradients();
  CHECK(nll.item() == doctest::Approx(loss_of(base)).epsilon(1e-4));
  double worst = 0.0;
  for (std::size_t t = 0; t < base.tensors().size(); ++t) {
    for (std::size_t j = 0; j < base.tensors()[t].values->size(); j += 7) {
      auto plus = base, minus = base;
      const float h = 1e-2f;
      (*plus.mutable_tensors()[t].values)[j] += h;
      (*minus.mutable_tensors()[t].values)[j] -= h;
      const double numeric = (loss_of(plus) - loss_of(minus)) / (2 * h);
      const double a = grads.values[t][j];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-2}));
    }
  }
  CHECK(worst < 1e-2);
}
