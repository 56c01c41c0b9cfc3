#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ulrn/corpus/corpus.hpp"

namespace ulrn::corpus {

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kPad = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kSpecialCount = 4;
inline constexpr std::size_t kMinVocabularySize = 8;

inline constexpr std::string_view kUserMarker = "<|user|>";
inline constexpr std::string_view kAssistantMarker = "<|assistant|>";

// Word-level pre-tokenization: lowercases, keeps role markers like "<|user|>"
// whole, splits runs of [a-z0-9'] into words and every other non-space
// character into its own token.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  // Keeps the (max_size - 4) most frequent words; ties break lexicographically.
  // Ids after the specials follow descending frequency.
  static Vocabulary build(const Corpus& corpus, std::size_t max_size);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // "<id>\t<token>" per line, ids contiguous from 0.
  std::string to_tsv() const;
  static Vocabulary from_tsv(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// BOS + word ids + EOS; unknown words become UNK.
TokenSequence tokenize(const Document& doc, const Vocabulary& vocab);
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);
// Space-joined tokens, BOS/EOS/PAD dropped.
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab);

std::vector<TaggedSequence> tokenize_corpus(const Corpus& corpus, const Vocabulary& vocab);

// Fraction of word tokens (BOS/EOS excluded) that are not UNK.
double coverage(const Corpus& corpus, const Vocabulary& vocab);

}  // namespace ulrn::corpus
