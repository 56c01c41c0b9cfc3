#include <doctest.h>

#include <filesystem>
#include <functional>
#include <set>

#include "ulrn/corpus/generators.hpp"
#include "ulrn/corpus/vocabulary.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"

using namespace ulrn;
using namespace ulrn::corpus;

namespace {

Corpus texts(std::initializer_list<const char*> items) {
  Corpus c;
  std::uint64_t id = 1;
  for (const char* t : items) c.add(Document(id++, Source::kNonSynth, t));
  return c;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kState;
}

std::size_t count_token(const Corpus& c, const std::string& word, std::size_t* total) {
  std::size_t n = 0;
  for (const auto& d : c.documents()) {
    for (const auto& w : split_words(d.text())) {
      ++*total;
      n += w == word ? 1 : 0;
    }
  }
  return n;
}

}  // namespace

TEST_CASE("vocabulary of a tiny corpus") {
  const auto v = Vocabulary::build(texts({"a b", "a c"}), 8);
  CHECK(v.size() == 7);
  CHECK(v.token(kBos) == "<bos>");
  CHECK(v.id("a") == 4);  // most frequent word first
  CHECK(v.contains("b"));
  CHECK(v.contains("c"));
  CHECK(v.id("zzz") == kUnk);
}

TEST_CASE("frequency ties at the cutoff keep the lexicographically smaller word") {
  const auto v = Vocabulary::build(texts({"a a a z y x w v"}), 8);
  CHECK(v.contains("a"));
  CHECK(v.contains("v"));
  CHECK(v.contains("x"));
  CHECK_FALSE(v.contains("y"));
  CHECK_FALSE(v.contains("z"));
}

TEST_CASE("vocabulary size below 8 is a configuration error") {
  CHECK(kind_of([] { Vocabulary::build(texts({"a"}), 7); }) == ErrorKind::kConfig);
}

TEST_CASE("tokenize and detokenize") {
  const auto v = Vocabulary::build(texts({"a b", "a c"}), 8);
  const auto seq = tokenize("a b", v);
  CHECK(seq.ids == std::vector<TokenId>{kBos, v.id("a"), v.id("b"), kEos});
  const auto unk = tokenize("a q b", v);
  CHECK(std::count(unk.ids.begin(), unk.ids.end(), kUnk) == 1);
  CHECK(detokenize(seq, v) == "a b");
  CHECK(split_words("Hello, <|user|> world's end.") ==
        std::vector<std::string>{"hello", ",", "<|user|>", "world's", "end", "."});
}

TEST_CASE("vocabulary round trips through tsv") {
  const auto v = Vocabulary::build(generate_nonsynth(3, 50), 300);
  const auto back = Vocabulary::from_tsv(v.to_tsv());
  CHECK(back.tokens() == v.tokens());
  CHECK(kind_of([] { Vocabulary::from_tsv("0\t<bos>\n2\tx\n"); }) == ErrorKind::kFormat);
}

TEST_CASE("generators are deterministic per seed") {
  CHECK(to_jsonl(generate_nonsynth(7, 1)) == to_jsonl(generate_nonsynth(7, 1)));
  CHECK(to_jsonl(generate_synthqa(7, 5)) == to_jsonl(generate_synthqa(7, 5)));
  CHECK(to_jsonl(generate_instruct(7, 5)) == to_jsonl(generate_instruct(7, 5)));
  CHECK(to_jsonl(generate_nonsynth(7, 3)) != to_jsonl(generate_nonsynth(8, 3)));
}

TEST_CASE("NonSynth carries no question scaffolding and has varied lengths") {
  const auto c = generate_nonsynth(11, 2000);
  std::size_t total = 0;
  const std::size_t q = count_token(c, "question", &total);
  CHECK(static_cast<double>(q) < 0.001 * static_cast<double>(total));
  std::set<std::size_t> lengths;
  for (const auto& d : c.documents()) {
    const auto n = split_words(d.text()).size();
    CHECK(n >= 30);
    CHECK(n <= 300);
    lengths.insert(n);
  }
  CHECK(lengths.size() >= 10);
}

TEST_CASE("SynthQA documents follow the Q-A templates") {
  const auto c = generate_synthqa(11, 300);
  std::size_t with_summary = 0;
  for (const auto& d : c.documents()) {
    CHECK(d.text().find("Question:") != std::string::npos);
    CHECK(d.text().find("Answer:") != std::string::npos);
    with_summary += d.text().find("Summary:") != std::string::npos ? 1 : 0;
    const auto n = split_words(d.text()).size();
    CHECK(n >= 30);
    CHECK(n <= 300);
  }
  CHECK(with_summary > 0);
  std::size_t summary_templates = 0;
  for (std::size_t t = 0; t < kSynthTemplateCount; ++t) summary_templates += template_has_summary(t);
  CHECK(summary_templates * 5 >= kSynthTemplateCount);
}

TEST_CASE("instruction exchanges carry exactly one marker of each role") {
  const auto c = generate_instruct(5, 200);
  for (const auto& d : c.documents()) {
    const auto words = split_words(d.text());
    CHECK(std::count(words.begin(), words.end(), std::string(kUserMarker)) == 1);
    CHECK(std::count(words.begin(), words.end(), std::string(kAssistantMarker)) == 1);
  }
  const auto v = Vocabulary::build(concatenate(generate_nonsynth(5, 200), c), 4096);
  CHECK(v.contains(kUserMarker));
  CHECK(v.contains(kAssistantMarker));
}

TEST_CASE("generated text is covered by a 4096-word vocabulary") {
  const auto c = generate_nonsynth(13, 1000);
  CHECK(coverage(c, Vocabulary::build(c, 4096)) >= 0.99);
}

TEST_CASE("mixing by document count") {
  const auto ns = generate_nonsynth(1, 9800, {30, 40});
  const auto sq = generate_synthqa(1, 250, {30, 100});
  const auto m = mix(ns, sq, 0.02, 9);
  CHECK(m.size() == 10000);
  CHECK(m.count(Source::kSynthQA) == 200);
  REQUIRE(m.mix_metadata().has_value());
  CHECK(m.mix_metadata()->realized_fraction == doctest::Approx(0.02));
  CHECK(synth_count_for(1000, 0.02) == 20);

  const auto none = mix(ns, sq, 0.0, 9);
  CHECK(none.size() == ns.size());
  CHECK(none.count(Source::kSynthQA) == 0);
  CHECK(to_jsonl(none) != to_jsonl(ns));  // shuffled

  const auto small = generate_synthqa(2, 30, {30, 100});
  const auto all = mix(ns, small, 1.0, 9);
  CHECK(all.size() == 30);
  CHECK(all.count(Source::kNonSynth) == 0);

  CHECK(kind_of([&] { mix(ns, small, 0.02, 9); }) == ErrorKind::kCapacity);
  CHECK(kind_of([&] { mix(ns, sq, 1.5, 9); }) == ErrorKind::kConfig);
}

TEST_CASE("JSON Lines round trip keeps ids, sources and mix metadata") {
  const auto dir = std::filesystem::temp_directory_path() / "ulrn_corpus_test";
  std::filesystem::create_directories(dir);
  const auto m = mix(generate_nonsynth(4, 40), generate_synthqa(4, 10), 0.1, 3);
  write_jsonl(m, dir / "m.jsonl");
  const auto back = read_jsonl(dir / "m.jsonl");
  CHECK(to_jsonl(back) == to_jsonl(m));
  REQUIRE(back.mix_metadata().has_value());
  CHECK(back.mix_metadata()->synth_count == m.mix_metadata()->synth_count);
  write_file(dir / "bad.jsonl", "{\"id\": 1, \"source\": \"other\", \"text\": \"x\"}\n");
  CHECK(kind_of([&] { read_jsonl(dir / "bad.jsonl"); }) == ErrorKind::kFormat);
  CHECK(kind_of([&] { read_jsonl(dir / "absent.jsonl"); }) == ErrorKind::kIo);
  std::filesystem::remove_all(dir);
}

TEST_CASE("document invariants") {
  CHECK(kind_of([] { Document(1, Source::kNonSynth, ""); }) == ErrorKind::kData);
  CHECK(kind_of([] { concatenate(texts({"a"}), texts({"b"})); }) == ErrorKind::kData);
}
