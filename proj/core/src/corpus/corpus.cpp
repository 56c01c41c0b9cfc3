#include "ulrn/corpus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"

namespace ulrn::corpus {

using nlohmann::json;

std::string_view to_string(Source source) {
  switch (source) {
    case Source::kNonSynth: return "nonsynth";
    case Source::kSynthQA: return "synthqa";
    case Source::kInstruct: return "instruct";
  }
  return "unknown";
}

Source parse_source(std::string_view name) {
  if (name == "nonsynth") return Source::kNonSynth;
  if (name == "synthqa") return Source::kSynthQA;
  if (name == "instruct") return Source::kInstruct;
  fail(ErrorKind::kFormat, "unknown document source '" + std::string(name) + "'");
}

Document::Document(std::uint64_t id, Source source, std::string text)
    : id_(id), source_(source), text_(std::move(text)) {
  require(!text_.empty(), ErrorKind::kData,
          "document " + std::to_string(id) + " has empty text");
}

std::size_t Corpus::count(Source source) const {
  return static_cast<std::size_t>(std::count_if(
      documents_.begin(), documents_.end(),
      [source](const Document& d) { return d.source() == source; }));
}

Corpus Corpus::filter(Source source) const {
  Corpus out;
  for (const Document& d : documents_) {
    if (d.source() == source) out.add(d);
  }
  return out;
}

Corpus concatenate(const Corpus& base, const Corpus& more) {
  std::unordered_set<std::uint64_t> seen;
  Corpus out;
  for (const Corpus* c : {&base, &more}) {
    for (const Document& d : c->documents()) {
      require(seen.insert(d.id()).second, ErrorKind::kData,
              "duplicate document id " + std::to_string(d.id()));
      out.add(d);
    }
  }
  return out;
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const Document& d : corpus.documents()) {
    json line = {{"id", d.id()}, {"source", to_string(d.source())}, {"text", d.text()}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, to_jsonl(corpus));
  if (const auto& meta = corpus.mix_metadata()) {
    json m = {{"nonsynth_count", meta->nonsynth_count},
              {"synth_count", meta->synth_count},
              {"requested_fraction", meta->requested_fraction},
              {"realized_fraction", meta->realized_fraction},
              {"seed", meta->seed}};
    write_file(path.string() + ".meta.json", m.dump(2) + "\n");
  }
}

Corpus read_jsonl(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  Corpus corpus;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      corpus.add(Document(j.at("id").get<std::uint64_t>(),
                          parse_source(j.at("source").get<std::string>()),
                          j.at("text").get<std::string>()));
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  const std::filesystem::path meta_path = path.string() + ".meta.json";
  if (std::filesystem::exists(meta_path)) {
    try {
      json m = json::parse(read_file(meta_path));
      MixMetadata meta;
      meta.nonsynth_count = m.at("nonsynth_count").get<std::size_t>();
      meta.synth_count = m.at("synth_count").get<std::size_t>();
      meta.requested_fraction = m.at("requested_fraction").get<double>();
      meta.realized_fraction = m.at("realized_fraction").get<double>();
      meta.seed = m.at("seed").get<std::uint64_t>();
      corpus.set_mix_metadata(meta);
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, meta_path.string() + ": " + e.what());
    }
  }
  return corpus;
}

std::size_t synth_count_for(std::size_t nonsynth_count, double f) {
  require(f >= 0.0 && f < 1.0, ErrorKind::kConfig,
          "synthetic fraction must lie in [0, 1) when nonsynth documents are kept");
  if (f == 0.0) return 0;
  // Smallest s with s == round(f * (n + s)).
  const double n = static_cast<double>(nonsynth_count);
  const auto guess = static_cast<long long>(std::floor(f * n / (1.0 - f)));
  for (long long s = std::max(0LL, guess - 2); s <= guess + 3; ++s) {
    if (std::llround(f * (n + static_cast<double>(s))) == s) {
      return static_cast<std::size_t>(s);
    }
  }
  return static_cast<std::size_t>(std::llround(f * n / (1.0 - f)));
}

Corpus mix(const Corpus& nonsynth, const Corpus& synth, double synth_fraction,
           std::uint64_t seed) {
  require(synth_fraction >= 0.0 && synth_fraction <= 1.0, ErrorKind::kConfig,
          "synthetic fraction " + std::to_string(synth_fraction) + " outside [0, 1]");
  std::vector<Document> docs;
  std::size_t n_nonsynth = 0;
  std::size_t n_synth = 0;
  if (synth_fraction == 1.0) {
    require(!synth.empty(), ErrorKind::kCapacity, "synthetic corpus is empty");
    docs = synth.documents();
    n_synth = docs.size();
  } else {
    require(!nonsynth.empty(), ErrorKind::kCapacity, "non-synthetic corpus is empty");
    n_nonsynth = nonsynth.size();
    n_synth = synth_count_for(n_nonsynth, synth_fraction);
    require(n_synth <= synth.size(), ErrorKind::kCapacity,
            "mix needs " + std::to_string(n_synth) + " synthetic documents, only " +
                std::to_string(synth.size()) + " available");
    docs = nonsynth.documents();
    docs.insert(docs.end(), synth.documents().begin(),
                synth.documents().begin() + static_cast<std::ptrdiff_t>(n_synth));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(docs.begin(), docs.end(), rng);
  Corpus out(std::move(docs));
  MixMetadata meta;
  meta.nonsynth_count = n_nonsynth;
  meta.synth_count = n_synth;
  meta.requested_fraction = synth_fraction;
  meta.realized_fraction =
      static_cast<double>(n_synth) / static_cast<double>(n_synth + n_nonsynth);
  meta.seed = seed;
  out.set_mix_metadata(meta);
  return out;
}

}  // namespace ulrn::corpus
