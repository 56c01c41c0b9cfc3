#include "ulrn/corpus/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"

namespace ulrn::corpus {

namespace {

constexpr std::string_view kSpecialNames[kSpecialCount] = {"<bos>", "<eos>", "<pad>",
                                                           "<unk>"};

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '\'';
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '<' && i + 1 < text.size() && text[i + 1] == '|') {
      const std::size_t close = text.find("|>", i + 2);
      if (close != std::string_view::npos) {
        const std::string_view inner = text.substr(i + 2, close - i - 2);
        const bool simple = !inner.empty() && std::all_of(inner.begin(), inner.end(), [](char ch) {
          return std::isalpha(static_cast<unsigned char>(ch)) || ch == '_';
        });
        if (simple) {
          out.emplace_back(text.substr(i, close + 2 - i));
          i = close + 2;
          continue;
        }
      }
    }
    if (is_word_char(c)) {
      std::string word;
      while (i < text.size() && is_word_char(text[i])) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
      }
      out.push_back(std::move(word));
      continue;
    }
    out.emplace_back(1, c);
    ++i;
  }
  return out;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    const bool fresh =
        v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second;
    require(fresh, ErrorKind::kFormat, "duplicate vocabulary entry '" + v.tokens_[i] + "'");
  }
  return v;
}

Vocabulary Vocabulary::build(const Corpus& corpus, std::size_t max_size) {
  require(max_size >= kMinVocabularySize, ErrorKind::kConfig,
          "vocabulary size " + std::to_string(max_size) + " is below the minimum of " +
              std::to_string(kMinVocabularySize));
  require(!corpus.empty(), ErrorKind::kContract, "cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const Document& d : corpus.documents()) {
    for (std::string& w : split_words(d.text())) ++counts[std::move(w)];
  }
  for (std::string_view s : kSpecialNames) counts.erase(std::string(s));
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is lexicographic, so a stable sort by count keeps ties
  // in lexicographic order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - kSpecialCount);
  std::vector<std::string> tokens(kSpecialNames, kSpecialNames + kSpecialCount);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return from_tokens(std::move(tokens));
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    fail(ErrorKind::kVocabulary, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::to_tsv() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += std::to_string(i);
    out += '\t';
    out += tokens_[i];
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_tsv(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    require(tab != std::string_view::npos && tab + 1 < line.size(), ErrorKind::kFormat,
            "vocabulary line without '<id>\\t<token>': " + std::string(line));
    const std::string id_text(line.substr(0, tab));
    std::size_t parsed = 0;
    unsigned long id = 0;
    try {
      id = std::stoul(id_text, &parsed);
    } catch (const std::exception&) {
      parsed = 0;
    }
    require(parsed == id_text.size() && id == tokens.size(), ErrorKind::kFormat,
            "vocabulary ids must be contiguous from 0; got '" + id_text + "' at position " +
                std::to_string(tokens.size()));
    tokens.emplace_back(line.substr(tab + 1));
  }
  require(tokens.size() >= kMinVocabularySize, ErrorKind::kFormat, "vocabulary file too small");
  for (std::size_t i = 0; i < kSpecialCount; ++i) {
    require(tokens[i] == kSpecialNames[i], ErrorKind::kFormat,
            "special token " + std::to_string(i) + " must be " + std::string(kSpecialNames[i]));
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file(path, to_tsv()); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  return from_tsv(read_file(path));
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSequence seq;
  const auto words = split_words(text);
  seq.ids.reserve(words.size() + 2);
  seq.ids.push_back(kBos);
  for (const std::string& w : words) seq.ids.push_back(vocab.id(w));
  seq.ids.push_back(kEos);
  return seq;
}

TokenSequence tokenize(const Document& doc, const Vocabulary& vocab) {
  return tokenize(doc.text(), vocab);
}

std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : seq.ids) {
    if (id == kBos || id == kEos || id == kPad) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

std::vector<TaggedSequence> tokenize_corpus(const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<TaggedSequence> out;
  out.reserve(corpus.size());
  for (const Document& d : corpus.documents()) {
    out.push_back({d.source(), d.id(), tokenize(d, vocab)});
  }
  return out;
}

double coverage(const Corpus& corpus, const Vocabulary& vocab) {
  std::size_t known = 0, total = 0;
  for (const Document& d : corpus.documents()) {
    for (const std::string& w : split_words(d.text())) {
      ++total;
      if (vocab.contains(w)) ++known;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(known) / static_cast<double>(total);
}

}  // namespace ulrn::corpus
