#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ulrn/trainer/config.hpp"
#include "ulrn/trainer/trainer.hpp"

namespace ulrn::plan {

namespace fs = std::filesystem;

// ---- data generation ----

struct DataOptions {
  std::uint64_t seed = 1234;
  std::size_t n_docs = 3000;       // NonSynth training documents
  double synth_fraction = 0.02;    // share of the mixed corpus
  std::size_t n_synth = 0;         // SynthQA pool; 0 = max(mix need, n_docs / 6)
  std::size_t n_instruct = 0;      // instruction pairs; 0 = n_docs / 10
  std::size_t n_heldout = 200;     // per class
  std::size_t vocab_size = 2048;
  std::size_t min_tokens = 30;
  std::size_t max_tokens = 300;

  void validate() const;  // kConfig
  nlohmann::json to_json() const;
  static DataOptions from_json(const nlohmann::json& j);
};

// File names written by generate_data, relative to its output directory.
inline constexpr const char* kDataFiles[] = {
    "nonsynth.jsonl",         "synthqa.jsonl",         "instruct.jsonl",
    "mix.jsonl",              "nonsynth_heldout.jsonl", "synthqa_heldout.jsonl",
    "instruct_heldout.jsonl", "vocab.tsv",              "manifest.json"};

// Writes every corpus plus vocab.tsv (built from the three training corpora)
// and manifest.json (version, options, hashes of the other files).
void generate_data(const DataOptions& options, const fs::path& out_dir);

// ---- plan ----

struct StageSpec {
  std::string name;
  trainer::Stage stage = trainer::Stage::kPretrain;
  fs::path config;
  std::optional<fs::path> in;  // every stage but pretrain
  std::vector<fs::path> data;  // concatenated; unlearn splits by source
  fs::path out;
};

enum class AnalysisKind { kPerplexity, kTokens, kTsne, kShift };
std::string_view to_string(AnalysisKind k);
AnalysisKind parse_analysis(std::string_view name);  // ppl | tokens | tsne | shift

struct AnalysisSpec {
  std::string name;
  AnalysisKind what = AnalysisKind::kPerplexity;
  std::vector<fs::path> models;
  std::vector<std::string> labels;  // one per model; default: file stem
  std::vector<fs::path> corpora;
  fs::path out;                     // directory
  std::size_t per_class = 200;      // t-SNE documents per source
  double perplexity = 30.0;         // t-SNE target
  std::size_t iterations = 1000;

  nlohmann::json to_json() const;
};

struct ExperimentPlan {
  std::optional<std::uint64_t> seed;  // overrides stage config seeds when set
  fs::path vocab;
  std::optional<DataOptions> data;  // generate_data runs first when present
  fs::path data_dir;
  std::vector<StageSpec> stages;
  std::vector<AnalysisSpec> analyses;
  fs::path root;  // directory relative paths resolve against
};

// Paths in the JSON are relative to the plan file's directory.
ExperimentPlan parse_plan(const nlohmann::json& j, const fs::path& root);
ExperimentPlan load_plan(const fs::path& path);

// A unit of work in the plan graph.
struct Node {
  enum class Kind { kData, kStage, kAnalysis } kind;
  std::size_t index = 0;  // into stages or analyses
  std::string name;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  fs::path stamp;
};

std::vector<Node> nodes(const ExperimentPlan& plan);

// Rejects cycles, missing inputs and duplicate outputs, all listed in one
// kConfig error. Returns the nodes in dependency order.
std::vector<Node> validate(const ExperimentPlan& plan);

struct RunSummary {
  std::vector<std::string> executed;
  std::vector<std::string> skipped;  // up to date by content hash
};

using Logger = std::function<void(const std::string&)>;

RunSummary run_plan(const ExperimentPlan& plan, const Logger& log = {});

// ---- single steps, shared with the command line ----

fs::path record_path(const fs::path& checkpoint);  // <ckpt>.json
fs::path log_path(const fs::path& checkpoint);     // <ckpt>.csv

// Loads the inputs, trains and writes checkpoint, RunRecord JSON and loss CSV.
// A pretrain stage takes its vocab_size from the vocabulary.
trainer::RunRecord run_stage(const StageSpec& spec, const fs::path& vocab,
                             std::optional<std::uint64_t> seed = std::nullopt);

// Writes the artifacts of one analysis into spec.out.
void run_analysis(const AnalysisSpec& spec, const fs::path& vocab, std::uint64_t seed);

// Provenance line shared by emitted files.
std::string provenance(const std::string& config_hash, const std::string& extra = {});

}  // namespace ulrn::plan
