#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ulrn/corpus/corpus.hpp"

namespace ulrn::corpus {

// Order-2 word-level Markov chain. The default instance is fitted on the
// bundled public-domain seed corpus and is the only content source for all
// three generators, so they differ in structure alone.
class MarkovSource {
 public:
  explicit MarkovSource(std::string_view training_text);
  static const MarkovSource& bundled();

  // Emits at least `min_tokens` tokens, then continues to the next sentence
  // boundary unless `max_tokens` is reached first.
  std::vector<std::string> sample(std::mt19937_64& rng, std::size_t min_tokens,
                                  std::size_t max_tokens) const;

  std::size_t word_count() const { return words_.size(); }
  std::size_t state_count() const { return successors_.size(); }

 private:
  std::vector<std::string> words_;
  std::vector<std::size_t> sentence_starts_;  // indices into words_
  // (w1, w2) -> positions in words_ of every observed successor
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> successors_;
  std::unordered_map<std::string, std::uint32_t> word_index_;
  std::vector<std::uint32_t> word_ids_;
};

std::string_view seed_corpus_text();

struct LengthRange {
  std::size_t min_tokens = 30;
  std::size_t max_tokens = 300;
};

inline constexpr std::size_t kSynthTemplateCount = 5;

Corpus generate_nonsynth(std::uint64_t seed, std::size_t n_docs, LengthRange range = {});
Corpus generate_synthqa(std::uint64_t seed, std::size_t n_docs, LengthRange range = {});
Corpus generate_instruct(std::uint64_t seed, std::size_t n_pairs, LengthRange range = {});

// Template index used for the i-th SynthQA document of a given seed.
std::size_t synthqa_template(std::uint64_t seed, std::size_t index);
bool template_has_summary(std::size_t template_index);

// Per-document generator seed: seed xor index, mixed.
std::uint64_t document_seed(std::uint64_t seed, Source source, std::size_t index);

}  // namespace ulrn::corpus
