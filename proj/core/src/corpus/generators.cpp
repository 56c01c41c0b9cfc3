#include "ulrn/corpus/generators.hpp"

#include <algorithm>
#include <array>

#include "ulrn/corpus/vocabulary.hpp"
#include "ulrn/errors.hpp"

namespace ulrn::corpus {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t document_id(std::uint64_t seed, Source source, std::size_t index) {
  const std::uint64_t tag = static_cast<std::uint64_t>(source) + 1;
  const std::uint64_t salt = splitmix64(seed) & 0xffffffULL;
  return (tag << 56) | (salt << 32) | (static_cast<std::uint64_t>(index) & 0xffffffffULL);
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const std::string& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// Content fragment without trailing sentence punctuation, for embedding in a
// question.
std::string fragment(std::mt19937_64& rng, std::size_t min_tokens, std::size_t max_tokens) {
  auto words = MarkovSource::bundled().sample(rng, min_tokens, max_tokens);
  while (words.size() > 1 &&
         (words.back() == "." || words.back() == "?" || words.back() == "!" ||
          words.back() == "," || words.back() == ";" || words.back() == ":")) {
    words.pop_back();
  }
  return join(words);
}

std::string passage(std::mt19937_64& rng, std::size_t min_tokens, std::size_t max_tokens) {
  return join(MarkovSource::bundled().sample(rng, min_tokens, max_tokens));
}

// Longest scaffold (multiple choice with 14-token question and 4-token
// options) is 70 tokens; keep room for an answer body.
constexpr std::size_t kMinSynthMaxTokens = 80;

std::size_t token_count(const std::string& text) { return split_words(text).size(); }

void check_count(std::size_t n, const char* what) {
  require(n >= 1, ErrorKind::kConfig, std::string(what) + " must be at least 1");
}

void check_range(const LengthRange& r) {
  require(r.min_tokens >= 30 && r.min_tokens <= r.max_tokens, ErrorKind::kConfig,
          "document length range must satisfy 30 <= min <= max");
}

std::size_t draw_length(std::mt19937_64& rng, const LengthRange& r) {
  std::uniform_int_distribution<std::size_t> len(r.min_tokens, r.max_tokens);
  return len(rng);
}

struct TemplateParts {
  std::string question;
  std::array<std::string, 4> options;
  std::size_t correct = 0;
  std::string answer;
  std::string summary;
};

// Renders one SynthQA template. The scaffolding follows the usual synthetic
// Q-A layout: a "Question:" header, optional choices, an "Answer:" section and
// in some templates a closing "Summary:".
std::string render_template(std::size_t t, const TemplateParts& p) {
  switch (t) {
    case 0: {
      static constexpr char kLetters[] = {'A', 'B', 'C', 'D'};
      std::string text = "Question:\n\nWhich of the following best describes " + p.question + "?\n\n";
      for (std::size_t k = 0; k < 4; ++k) {
        text += std::string(1, kLetters[k]) + ") " + p.options[k] + "\n\n";
      }
      return text + "**Answer:**\n\n" + p.answer + "\n\nSo, the correct answer is **" +
             std::string(1, kLetters[p.correct]) + ") " + p.options[p.correct] + "**.";
    }
    case 1:
      return "Question: What is meant by the words: " + p.question + "?\nAnswer: " + p.answer;
    case 2:
      return "Question: Why is it written that " + p.question + "?\nAnswer: " + p.answer +
             "\nSummary: " + p.summary;
    case 3:
      return "Question: Explain the following passage. " + p.question +
             ".\nAnswer: The passage teaches that " + p.answer + "\nSummary: In short, " +
             p.summary;
    default:
      return "Question: What does the text say about " + p.question + "?\nBest Answer: " +
             p.answer;
  }
}

std::string fill_template(std::size_t t, std::mt19937_64& rng, std::size_t target,
                          const LengthRange& range) {
  TemplateParts parts;
  parts.question = fragment(rng, 4, 14);
  if (t == 0) {
    for (auto& o : parts.options) o = fragment(rng, 2, 4);
    std::uniform_int_distribution<std::size_t> pick(0, 3);
    parts.correct = pick(rng);
  }
  const std::size_t used = token_count(render_template(t, parts));
  const std::size_t hi = range.max_tokens - used;
  const std::size_t lo = std::clamp<std::size_t>(target > used ? target - used : 2, 2, hi);
  if (template_has_summary(t)) {
    parts.answer = passage(rng, std::max<std::size_t>(2, lo * 2 / 3), hi * 2 / 3);
    const std::size_t a = token_count(parts.answer);
    const std::size_t s_hi = hi - a;
    parts.summary = passage(rng, std::clamp<std::size_t>(lo > a ? lo - a : 2, 2, s_hi), s_hi);
  } else {
    parts.answer = passage(rng, lo, hi);
  }
  return render_template(t, parts);
}

// Request phrasings for the user turn of instruction exchanges. Users mostly
// ask questions, so most requests share phrasing with the SynthQA stems.
constexpr std::array<std::string_view, 6> kRequestPrefix = {
    "What is meant by the words: ", "Why is it written that ", "What does the text say about ",
    "Can you explain what is meant by ", "What is the meaning of ", "Tell me about "};
constexpr std::array<std::string_view, 6> kRequestSuffix = {"?", "?", "?", "?", "?", "."};

std::mt19937_64 document_rng(std::uint64_t seed, Source source, std::size_t index) {
  return std::mt19937_64(document_seed(seed, source, index));
}

}  // namespace

std::uint64_t document_seed(std::uint64_t seed, Source source, std::size_t index) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) * 4 +
                                      static_cast<std::uint64_t>(source)));
}

bool template_has_summary(std::size_t template_index) {
  return template_index == 2 || template_index == 3;
}

std::size_t synthqa_template(std::uint64_t seed, std::size_t index) {
  auto rng = document_rng(seed, Source::kSynthQA, index);
  std::uniform_int_distribution<std::size_t> pick(0, kSynthTemplateCount - 1);
  return pick(rng);
}

Corpus generate_nonsynth(std::uint64_t seed, std::size_t n_docs, LengthRange range) {
  check_count(n_docs, "n_docs");
  check_range(range);
  Corpus corpus;
  for (std::size_t i = 0; i < n_docs; ++i) {
    auto rng = document_rng(seed, Source::kNonSynth, i);
    const std::size_t target = draw_length(rng, range);
    corpus.add(Document(document_id(seed, Source::kNonSynth, i), Source::kNonSynth,
                        passage(rng, target, range.max_tokens)));
  }
  return corpus;
}

Corpus generate_synthqa(std::uint64_t seed, std::size_t n_docs, LengthRange range) {
  check_count(n_docs, "n_docs");
  check_range(range);
  require(range.max_tokens >= kMinSynthMaxTokens, ErrorKind::kConfig,
          "SynthQA documents need a maximum length of at least " +
              std::to_string(kMinSynthMaxTokens) + " tokens");
  Corpus corpus;
  for (std::size_t i = 0; i < n_docs; ++i) {
    auto rng = document_rng(seed, Source::kSynthQA, i);
    std::uniform_int_distribution<std::size_t> pick(0, kSynthTemplateCount - 1);
    const std::size_t t = pick(rng);
    const std::size_t target = draw_length(rng, range);
    std::string text = fill_template(t, rng, target, range);
    corpus.add(Document(document_id(seed, Source::kSynthQA, i), Source::kSynthQA, std::move(text)));
  }
  return corpus;
}

Corpus generate_instruct(std::uint64_t seed, std::size_t n_pairs, LengthRange range) {
  check_count(n_pairs, "n_pairs");
  check_range(range);
  Corpus corpus;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    auto rng = document_rng(seed, Source::kInstruct, i);
    std::uniform_int_distribution<std::size_t> pick(0, kRequestPrefix.size() - 1);
    const std::size_t r = pick(rng);
    const std::size_t target = draw_length(rng, range);
    const std::string request = std::string(kRequestPrefix[r]) + fragment(rng, 4, 14) +
                                std::string(kRequestSuffix[r]);
    const std::size_t used = token_count(request) + 2;  // plus both role markers
    const std::size_t hi = range.max_tokens - used;
    const std::size_t lo = std::clamp<std::size_t>(target > used ? target - used : 2, 2, hi);
    const std::string reply = passage(rng, lo, hi);
    corpus.add(Document(document_id(seed, Source::kInstruct, i), Source::kInstruct,
                        std::string(kUserMarker) + " " + request + " " +
                            std::string(kAssistantMarker) + " " + reply));
  }
  return corpus;
}

}  // namespace ulrn::corpus
