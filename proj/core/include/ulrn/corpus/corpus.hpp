#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ulrn::corpus {

using TokenId = std::int32_t;

enum class Source { kNonSynth, kSynthQA, kInstruct };

std::string_view to_string(Source source);
Source parse_source(std::string_view name);

class Document {
 public:
  Document(std::uint64_t id, Source source, std::string text);

  std::uint64_t id() const { return id_; }
  Source source() const { return source_; }
  const std::string& text() const { return text_; }

 private:
  std::uint64_t id_;
  Source source_;
  std::string text_;
};

// Token ids of one document: position i holds y_i and everything before it
// is the prefix the model conditions on.
struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

// A token sequence tagged with the class of the document it came from.
struct TaggedSequence {
  Source source;
  std::uint64_t doc_id;
  TokenSequence tokens;
};

struct MixMetadata {
  std::size_t nonsynth_count = 0;
  std::size_t synth_count = 0;
  double requested_fraction = 0.0;
  double realized_fraction = 0.0;  // by document count
  std::uint64_t seed = 0;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {}

  const std::vector<Document>& documents() const { return documents_; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }
  std::size_t count(Source source) const;

  void add(Document doc) { documents_.push_back(std::move(doc)); }

  const std::optional<MixMetadata>& mix_metadata() const { return mix_; }
  void set_mix_metadata(MixMetadata meta) { mix_ = meta; }

  // Documents of one class, in corpus order.
  Corpus filter(Source source) const;

 private:
  std::vector<Document> documents_;
  std::optional<MixMetadata> mix_;
};

// Appends `more` to `base`; ids must stay unique.
Corpus concatenate(const Corpus& base, const Corpus& more);

// JSON Lines: {"id": <u64>, "source": "...", "text": "..."} per document.
// Mix metadata, when present, goes to a "<path>.meta.json" sidecar.
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const Corpus& corpus);

// Output keeps every nonsynth document and adds exactly the number of
// synthetic documents that makes them round(fraction * total) of the result,
// taken from the front of `synth`; order is shuffled by `seed`.
Corpus mix(const Corpus& nonsynth, const Corpus& synth, double synth_fraction,
           std::uint64_t seed);

// Number of synthetic documents needed next to `nonsynth_count` others.
std::size_t synth_count_for(std::size_t nonsynth_count, double synth_fraction);

}  // namespace ulrn::corpus
