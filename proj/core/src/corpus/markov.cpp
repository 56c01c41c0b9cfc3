#include <algorithm>

#include "ulrn/corpus/generators.hpp"
#include "ulrn/corpus/vocabulary.hpp"
#include "ulrn/errors.hpp"

namespace ulrn::corpus {

namespace detail {
extern const std::string_view kSeedCorpus;
}

std::string_view seed_corpus_text() { return detail::kSeedCorpus; }

namespace {

std::uint64_t state_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

bool ends_sentence(const std::string& w) { return w == "." || w == "?" || w == "!"; }

}  // namespace

MarkovSource::MarkovSource(std::string_view training_text) {
  words_ = split_words(training_text);
  require(words_.size() >= 3, ErrorKind::kData, "Markov training text needs at least 3 words");
  word_ids_.reserve(words_.size());
  for (const std::string& w : words_) {
    auto [it, inserted] = word_index_.emplace(w, static_cast<std::uint32_t>(word_index_.size()));
    word_ids_.push_back(it->second);
  }
  sentence_starts_.push_back(0);
  for (std::size_t i = 0; i + 2 < words_.size(); ++i) {
    successors_[state_key(word_ids_[i], word_ids_[i + 1])].push_back(
        static_cast<std::uint32_t>(i + 2));
    if (ends_sentence(words_[i]) && i + 3 < words_.size()) sentence_starts_.push_back(i + 1);
  }
}

const MarkovSource& MarkovSource::bundled() {
  static const MarkovSource source(seed_corpus_text());
  return source;
}

std::vector<std::string> MarkovSource::sample(std::mt19937_64& rng, std::size_t min_tokens,
                                              std::size_t max_tokens) const {
  require(min_tokens >= 2 && min_tokens <= max_tokens, ErrorKind::kConfig,
          "invalid Markov sample length range");
  std::vector<std::string> out;
  std::uniform_int_distribution<std::size_t> pick_start(0, sentence_starts_.size() - 1);
  auto restart = [&](std::uint32_t& a, std::uint32_t& b) {
    const std::size_t s = sentence_starts_[pick_start(rng)];
    for (std::size_t k = 0; k < 2 && out.size() < max_tokens; ++k) out.push_back(words_[s + k]);
    a = word_ids_[s];
    b = word_ids_[s + 1];
  };
  std::uint32_t a = 0, b = 0;
  restart(a, b);
  while (out.size() < max_tokens) {
    if (out.size() >= min_tokens && ends_sentence(out.back())) break;
    auto it = successors_.find(state_key(a, b));
    if (it == successors_.end()) {
      restart(a, b);
      continue;
    }
    const auto& next = it->second;
    std::uniform_int_distribution<std::size_t> pick(0, next.size() - 1);
    const std::uint32_t pos = next[pick(rng)];
    out.push_back(words_[pos]);
    a = b;
    b = word_ids_[pos];
  }
  return out;
}

}  // namespace ulrn::corpus
