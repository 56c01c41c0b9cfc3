#include "ulrn/plan/plan.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/corpus/generators.hpp"
#include "ulrn/corpus/vocabulary.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"

namespace ulrn::plan {

using nlohmann::json;

namespace {

// Offsets that keep held-out documents apart from the training draws.
constexpr std::uint64_t kHeldoutSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kMixSalt = 0x2545f4914f6cdd1dULL;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

fs::path resolve(const fs::path& root, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (root / path).lexically_normal();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::kConfig, where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return key == k; });
    require(known, ErrorKind::kConfig, "unknown key '" + key + "' in " + where);
  }
}

corpus::Corpus load_corpora(const std::vector<fs::path>& paths) {
  corpus::Corpus all;
  for (const auto& p : paths) all = corpus::concatenate(all, corpus::read_jsonl(p));
  return all;
}

std::string corpora_hash(const std::vector<fs::path>& paths) {
  std::string cat;
  for (const auto& p : paths) cat += sha256_file(p);
  return sha256_hex(cat).substr(0, 16);
}

std::string join_checksums(const std::vector<model::ModelParameters>& models) {
  std::string s;
  for (const auto& m : models) s += (s.empty() ? "" : ",") + hex32(m.checksum());
  return s;
}

std::string stem_label(const fs::path& p) { return p.stem().string(); }

}  // namespace

// ---- data ----

void DataOptions::validate() const {
  require(synth_fraction >= 0.0 && synth_fraction < 1.0, ErrorKind::kConfig,
          "synth fraction must lie in [0, 1), got " + fmt(synth_fraction));
  require(n_docs >= 1, ErrorKind::kConfig, "n_docs must be at least 1");
  require(n_heldout >= 1, ErrorKind::kConfig, "n_heldout must be at least 1");
  require(vocab_size >= corpus::kMinVocabularySize, ErrorKind::kConfig,
          "vocab_size must be at least " + std::to_string(corpus::kMinVocabularySize));
  require(min_tokens >= 30 && min_tokens <= max_tokens, ErrorKind::kConfig,
          "document length range must satisfy 30 <= min <= max");
}

json DataOptions::to_json() const {
  return {{"seed", seed},           {"n_docs", n_docs},         {"synth_fraction", synth_fraction},
          {"n_synth", n_synth},     {"n_instruct", n_instruct}, {"n_heldout", n_heldout},
          {"vocab_size", vocab_size}, {"min_tokens", min_tokens}, {"max_tokens", max_tokens}};
}

DataOptions DataOptions::from_json(const json& j) {
  check_keys(j, {"seed", "n_docs", "synth_fraction", "n_synth", "n_instruct", "n_heldout",
                 "vocab_size", "min_tokens", "max_tokens", "dir"},
             "data");
  DataOptions o;
  o.seed = get_or(j, "seed", o.seed);
  o.n_docs = get_or(j, "n_docs", o.n_docs);
  o.synth_fraction = get_or(j, "synth_fraction", o.synth_fraction);
  o.n_synth = get_or(j, "n_synth", o.n_synth);
  o.n_instruct = get_or(j, "n_instruct", o.n_instruct);
  o.n_heldout = get_or(j, "n_heldout", o.n_heldout);
  o.vocab_size = get_or(j, "vocab_size", o.vocab_size);
  o.min_tokens = get_or(j, "min_tokens", o.min_tokens);
  o.max_tokens = get_or(j, "max_tokens", o.max_tokens);
  return o;
}

void generate_data(const DataOptions& options, const fs::path& out_dir) {
  options.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), ErrorKind::kIo,
          "cannot create output directory " + out_dir.string());

  const corpus::LengthRange range{options.min_tokens, options.max_tokens};
  const std::size_t mix_need = corpus::synth_count_for(options.n_docs, options.synth_fraction);
  const std::size_t n_synth =
      options.n_synth > 0 ? options.n_synth : std::max<std::size_t>({mix_need, options.n_docs / 6, 1});
  require(n_synth >= mix_need, ErrorKind::kConfig,
          "SynthQA pool of " + std::to_string(n_synth) + " cannot supply the " +
              std::to_string(mix_need) + " documents the mix needs");
  const std::size_t n_instruct =
      options.n_instruct > 0 ? options.n_instruct : std::max<std::size_t>(options.n_docs / 10, 1);

  const std::uint64_t s = options.seed, h = options.seed ^ kHeldoutSalt;
  const auto nonsynth = corpus::generate_nonsynth(s, options.n_docs, range);
  const auto synth = corpus::generate_synthqa(s, n_synth, range);
  const auto instruct = corpus::generate_instruct(s, n_instruct, range);
  const auto mixed = corpus::mix(nonsynth, synth, options.synth_fraction, s ^ kMixSalt);
  const auto vocab = corpus::Vocabulary::build(
      corpus::concatenate(corpus::concatenate(nonsynth, synth), instruct), options.vocab_size);

  corpus::write_jsonl(nonsynth, out_dir / "nonsynth.jsonl");
  corpus::write_jsonl(synth, out_dir / "synthqa.jsonl");
  corpus::write_jsonl(instruct, out_dir / "instruct.jsonl");
  corpus::write_jsonl(mixed, out_dir / "mix.jsonl");
  corpus::write_jsonl(corpus::generate_nonsynth(h, options.n_heldout, range),
                      out_dir / "nonsynth_heldout.jsonl");
  corpus::write_jsonl(corpus::generate_synthqa(h, options.n_heldout, range),
                      out_dir / "synthqa_heldout.jsonl");
  corpus::write_jsonl(corpus::generate_instruct(h, options.n_heldout, range),
                      out_dir / "instruct_heldout.jsonl");
  vocab.save(out_dir / "vocab.tsv");

  json manifest;
  manifest["version"] = ULRN_VERSION;
  manifest["config_hash"] = sha256_hex(options.to_json().dump());
  manifest["options"] = options.to_json();
  manifest["mix_synth_documents"] = mixed.count(corpus::Source::kSynthQA);
  manifest["vocab_coverage"] = corpus::coverage(nonsynth, vocab);
  for (const char* f : kDataFiles) {
    if (std::string_view(f) == "manifest.json") continue;
    manifest["files"][f] = sha256_file(out_dir / f);
  }
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---- plan parsing ----

std::string_view to_string(AnalysisKind k) {
  switch (k) {
    case AnalysisKind::kPerplexity: return "ppl";
    case AnalysisKind::kTokens: return "tokens";
    case AnalysisKind::kTsne: return "tsne";
    case AnalysisKind::kShift: return "shift";
  }
  return "?";
}

AnalysisKind parse_analysis(std::string_view name) {
  if (name == "ppl") return AnalysisKind::kPerplexity;
  if (name == "tokens") return AnalysisKind::kTokens;
  if (name == "tsne") return AnalysisKind::kTsne;
  if (name == "shift") return AnalysisKind::kShift;
  fail(ErrorKind::kConfig, "unknown analysis '" + std::string(name) + "' (ppl|tokens|tsne|shift)");
}

json AnalysisSpec::to_json() const {
  json j;
  j["name"] = name;
  j["what"] = std::string(to_string(what));
  for (const auto& m : models) j["models"].push_back(m.filename().string());
  j["labels"] = labels;
  for (const auto& c : corpora) j["corpora"].push_back(c.filename().string());
  j["per_class"] = per_class;
  j["perplexity"] = perplexity;
  j["iterations"] = iterations;
  return j;
}

ExperimentPlan parse_plan(const json& j, const fs::path& root) {
  check_keys(j, {"seed", "vocab", "data", "stages", "analyses"}, "plan");
  ExperimentPlan plan;
  plan.root = root;
  if (j.contains("seed")) plan.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("data")) {
    const auto& d = j.at("data");
    plan.data = DataOptions::from_json(d);
    if (plan.seed && !d.contains("seed")) plan.data->seed = *plan.seed;
    plan.data_dir = resolve(root, get_or<std::string>(d, "dir", "data"));
  }
  const std::string default_vocab = plan.data ? (plan.data_dir / "vocab.tsv").string() : "";
  plan.vocab = resolve(root, get_or<std::string>(j, "vocab", default_vocab));
  require(!plan.vocab.empty(), ErrorKind::kConfig, "plan needs a vocab path or a data section");

  for (const auto& s : get_or(j, "stages", json::array())) {
    check_keys(s, {"name", "stage", "config", "in", "data", "out"}, "stage");
    StageSpec st;
    st.name = s.at("name").get<std::string>();
    st.stage = trainer::parse_stage(s.at("stage").get<std::string>());
    st.config = resolve(root, s.at("config").get<std::string>());
    if (s.contains("in")) st.in = resolve(root, s.at("in").get<std::string>());
    for (const auto& d : s.at("data")) st.data.push_back(resolve(root, d.get<std::string>()));
    st.out = resolve(root, s.at("out").get<std::string>());
    require((st.stage == trainer::Stage::kPretrain) != st.in.has_value(), ErrorKind::kConfig,
            "stage '" + st.name + "': " +
                (st.in ? "pretrain takes no input checkpoint" : "needs an input checkpoint"));
    require(!st.data.empty(), ErrorKind::kConfig, "stage '" + st.name + "' has no data");
    plan.stages.push_back(std::move(st));
  }
  for (const auto& a : get_or(j, "analyses", json::array())) {
    check_keys(a, {"name", "what", "models", "labels", "corpora", "out", "per_class", "perplexity",
                   "iterations"},
               "analysis");
    AnalysisSpec an;
    an.name = a.at("name").get<std::string>();
    an.what = parse_analysis(a.at("what").get<std::string>());
    for (const auto& m : get_or(a, "models", json::array())) an.models.push_back(resolve(root, m.get<std::string>()));
    an.labels = get_or(a, "labels", std::vector<std::string>{});
    for (const auto& c : a.at("corpora")) an.corpora.push_back(resolve(root, c.get<std::string>()));
    an.out = resolve(root, a.at("out").get<std::string>());
    an.per_class = get_or(a, "per_class", an.per_class);
    an.perplexity = get_or(a, "perplexity", an.perplexity);
    an.iterations = get_or(a, "iterations", an.iterations);
    if (an.labels.empty()) {
      for (const auto& m : an.models) an.labels.push_back(stem_label(m));
    }
    require(an.labels.size() == an.models.size(), ErrorKind::kConfig,
            "analysis '" + an.name + "': labels must match models one to one");
    plan.analyses.push_back(std::move(an));
  }
  std::set<std::string> names;
  for (const auto& s : plan.stages) {
    require(names.insert(s.name).second, ErrorKind::kConfig, "duplicate node name '" + s.name + "'");
  }
  for (const auto& a : plan.analyses) {
    require(names.insert(a.name).second, ErrorKind::kConfig, "duplicate node name '" + a.name + "'");
  }
  return plan;
}

ExperimentPlan load_plan(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, "plan " + path.string() + ": " + e.what());
  }
  try {
    return parse_plan(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, "plan " + path.string() + ": " + e.what());
  }
}

// ---- graph ----

fs::path record_path(const fs::path& checkpoint) {
  return fs::path(checkpoint.string() + ".json");
}
fs::path log_path(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".csv"); }

std::vector<Node> nodes(const ExperimentPlan& plan) {
  std::vector<Node> out;
  if (plan.data) {
    Node n{Node::Kind::kData, 0, "gen-data", {}, {}, plan.data_dir / ".stamp"};
    for (const char* f : kDataFiles) n.outputs.push_back(plan.data_dir / f);
    out.push_back(std::move(n));
  }
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const auto& s = plan.stages[i];
    Node n{Node::Kind::kStage, i, s.name, {s.config, plan.vocab}, {}, {}};
    if (s.in) n.inputs.push_back(*s.in);
    n.inputs.insert(n.inputs.end(), s.data.begin(), s.data.end());
    n.outputs = {s.out, record_path(s.out), log_path(s.out)};
    n.stamp = fs::path(s.out.string() + ".stamp");
    out.push_back(std::move(n));
  }
  for (std::size_t i = 0; i < plan.analyses.size(); ++i) {
    const auto& a = plan.analyses[i];
    Node n{Node::Kind::kAnalysis, i, a.name, a.models, {}, a.out / ".stamp"};
    n.inputs.insert(n.inputs.end(), a.corpora.begin(), a.corpora.end());
    n.inputs.push_back(plan.vocab);
    n.outputs = {a.out / "provenance.json"};
    out.push_back(std::move(n));
  }
  return out;
}

std::vector<Node> validate(const ExperimentPlan& plan) {
  auto all = nodes(plan);
  std::vector<std::string> problems;
  std::map<fs::path, std::size_t> producer;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (const auto& o : all[i].outputs) {
      const auto [it, fresh] = producer.emplace(o, i);
      if (!fresh) {
        problems.push_back("output " + o.string() + " is produced by both '" +
                           all[it->second].name + "' and '" + all[i].name + "'");
      }
    }
  }
  std::vector<std::vector<std::size_t>> deps(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (const auto& in : all[i].inputs) {
      const auto it = producer.find(in);
      if (it != producer.end()) {
        deps[i].push_back(it->second);
      } else if (!fs::exists(in)) {
        problems.push_back("'" + all[i].name + "' needs missing input " + in.string());
      }
    }
  }
  // Kahn's algorithm; whatever is left over sits on a cycle.
  std::vector<std::size_t> pending(all.size());
  std::vector<std::vector<std::size_t>> users(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::sort(deps[i].begin(), deps[i].end());
    deps[i].erase(std::unique(deps[i].begin(), deps[i].end()), deps[i].end());
    pending[i] = deps[i].size();
    for (std::size_t d : deps[i]) users[d].push_back(i);
  }
  std::vector<std::size_t> ready, order;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (pending[i] == 0) ready.push_back(i);
  }
  while (!ready.empty()) {
    const std::size_t i = ready.front();
    ready.erase(ready.begin());
    order.push_back(i);
    for (std::size_t u : users[i]) {
      if (--pending[u] == 0) ready.push_back(u);
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (pending[i] > 0) problems.push_back("'" + all[i].name + "' is part of a dependency cycle");
  }
  if (!problems.empty()) {
    std::string msg = "invalid plan:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(ErrorKind::kConfig, msg);
  }
  std::vector<Node> sorted;
  for (std::size_t i : order) sorted.push_back(all[i]);
  return sorted;
}

// ---- execution ----

std::string provenance(const std::string& config_hash, const std::string& extra) {
  std::string s = "ulrn " ULRN_VERSION " config " + config_hash;
  if (!extra.empty()) s += " " + extra;
  return s;
}

trainer::RunRecord run_stage(const StageSpec& spec, const fs::path& vocab_path,
                             std::optional<std::uint64_t> seed) {
  using trainer::Stage;
  auto config = trainer::load_config(spec.config);
  require(config.stage == spec.stage, ErrorKind::kConfig,
          "config " + spec.config.string() + " is for stage " +
              std::string(trainer::to_string(config.stage)) + ", not " +
              std::string(trainer::to_string(spec.stage)));
  if (seed) config.seed = *seed;
  const auto vocab = corpus::Vocabulary::load(vocab_path);
  const auto data = corpus::tokenize_corpus(load_corpora(spec.data), vocab);

  std::optional<model::ModelParameters> base;
  if (spec.in) {
    require(spec.stage != Stage::kPretrain, ErrorKind::kConfig, "pretrain takes no input checkpoint");
    base = model::load_checkpoint(*spec.in);
    require(base->config().vocab_size == vocab.size(), ErrorKind::kShape,
            "checkpoint " + spec.in->string() + " has vocabulary size " +
                std::to_string(base->config().vocab_size) + " but " + vocab_path.string() +
                " has " + std::to_string(vocab.size()));
  } else {
    require(spec.stage == Stage::kPretrain, ErrorKind::kConfig,
            "stage " + std::string(trainer::to_string(spec.stage)) + " needs an input checkpoint");
  }

  trainer::TrainResult result;
  switch (spec.stage) {
    case Stage::kPretrain:
      config.model.vocab_size = vocab.size();
      result = trainer::pretrain(config, data);
      break;
    case Stage::kContinuedPretrain:
      result = trainer::continued_pretrain(*base, config, data);
      break;
    case Stage::kSFT:
      require(vocab.contains(corpus::kAssistantMarker), ErrorKind::kData,
              "vocabulary lacks the assistant marker");
      result = trainer::sft(*base, config, data, vocab.id(corpus::kAssistantMarker));
      break;
    case Stage::kUnlearn: {
      std::vector<corpus::TaggedSequence> forget, keep;
      for (const auto& s : data) {
        if (s.source == corpus::Source::kSynthQA) forget.push_back(s);
        if (s.source == corpus::Source::kNonSynth) keep.push_back(s);
      }
      result = trainer::unlearn(*base, config, forget, keep);
      break;
    }
  }
  std::error_code ec;
  if (spec.out.has_parent_path()) fs::create_directories(spec.out.parent_path(), ec);
  model::save_checkpoint(result.params, spec.out);
  result.record.checkpoint = spec.out.filename().string();
  write_file(record_path(spec.out), result.record.to_json().dump(2) + "\n");
  write_file(log_path(spec.out), result.record.csv());
  return result.record;
}

namespace {

std::string curve_csv(const analysis::KdeCurve& c, const std::string& prov) {
  return "# " + prov + " bandwidth " + fmt(c.bandwidth) + "\n" + c.csv();
}

}  // namespace

void run_analysis(const AnalysisSpec& spec, const fs::path& vocab_path, std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(spec.out, ec);
  require(!ec && fs::is_directory(spec.out), ErrorKind::kIo,
          "cannot create output directory " + spec.out.string());
  const auto vocab = corpus::Vocabulary::load(vocab_path);
  json spec_json = spec.to_json();
  spec_json["seed"] = seed;
  const std::string hash = sha256_hex(spec_json.dump()).substr(0, 16);
  const std::string corpus_hash = corpora_hash(spec.corpora);
  const auto data = corpus::tokenize_corpus(load_corpora(spec.corpora), vocab);
  std::vector<model::ModelParameters> models;
  for (const auto& m : spec.models) {
    models.push_back(model::load_checkpoint(m));
    require(models.back().config().vocab_size == vocab.size(), ErrorKind::kShape,
            "model " + m.string() + " does not match vocabulary " + vocab_path.string());
  }
  const std::string prov =
      provenance(hash, "models " + join_checksums(models) + " corpus " + corpus_hash + " seed " +
                           std::to_string(seed));

  json meta;
  meta["version"] = ULRN_VERSION;
  meta["config_hash"] = hash;
  meta["seed"] = seed;
  meta["corpus_hash"] = corpus_hash;
  meta["analysis"] = spec_json;
  for (std::size_t i = 0; i < models.size(); ++i) {
    meta["models"].push_back({{"label", spec.labels[i]}, {"checksum", hex32(models[i].checksum())}});
  }

  switch (spec.what) {
    case AnalysisKind::kPerplexity:
    case AnalysisKind::kShift: {
      require(!models.empty(), ErrorKind::kConfig, "analysis '" + spec.name + "' needs a model");
      std::vector<std::vector<double>> samples;
      json rows = json::array();
      for (std::size_t i = 0; i < models.size(); ++i) {
        auto dist = analysis::perplexity_distribution(models[i], data);
        const auto& label = spec.labels[i];
        if (spec.what == AnalysisKind::kPerplexity) {
          write_file(spec.out / ("ppl_" + label + ".csv"), curve_csv(dist.curve, prov));
          std::string s = "# " + prov + "\ndoc_id,perplexity\n";
          for (std::size_t d = 0; d < data.size(); ++d) {
            s += std::to_string(data[d].doc_id) + "," + fmt(dist.samples[d]) + "\n";
          }
          write_file(spec.out / ("ppl_" + label + "_samples.csv"), s);
        }
        json row = {{"label", label},
                    {"checksum", hex32(models[i].checksum())},
                    {"mean", analysis::mean(dist.samples)},
                    {"variance", analysis::variance(dist.samples)},
                    {"clip_value", dist.clip_value},
                    {"bandwidth", dist.curve.bandwidth}};
        if (i > 0) {
          const auto m = analysis::shift_metrics(samples[0], dist.samples);
          row["shift"] = m.to_json();
          row["mean_change"] = m.mean_shift / analysis::mean(samples[0]);
        }
        rows.push_back(row);
        samples.push_back(std::move(dist.samples));
      }
      json out = meta;
      out["corpus"] = spec.corpora[0].filename().string();
      out["documents"] = data.size();
      out["reference"] = spec.labels[0];
      out["rows"] = rows;
      write_file(spec.out / "shift.json", out.dump(2) + "\n");
      break;
    }
    case AnalysisKind::kTokens: {
      const auto r = analysis::token_id_density(data, vocab);
      std::string s = "# " + prov + " bandwidth " + fmt(r.synth.bandwidth) + "\nx,synth,nonsynth\n";
      for (std::size_t i = 0; i < r.synth.grid.size(); ++i) {
        s += fmt(r.synth.grid[i]) + "," + fmt(r.synth.density[i]) + "," + fmt(r.nonsynth.density[i]) + "\n";
      }
      write_file(spec.out / "token_kde.csv", s);
      write_file(spec.out / "token_hist.csv", "# " + prov + "\n" + r.histogram_csv());
      json peaks = meta;
      auto list = [](const std::vector<analysis::TokenPeak>& ps) {
        json a = json::array();
        for (const auto& p : ps) {
          a.push_back({{"id", p.id}, {"token", p.token}, {"density", p.density},
                       {"other_density", p.other_density}});
        }
        return a;
      };
      peaks["bandwidth"] = r.synth.bandwidth;
      peaks["synth_peaks"] = list(r.synth_peaks);
      peaks["nonsynth_peaks"] = list(r.nonsynth_peaks);
      write_file(spec.out / "token_peaks.json", peaks.dump(2) + "\n");
      break;
    }
    case AnalysisKind::kTsne: {
      require(models.size() == 1, ErrorKind::kConfig,
              "analysis '" + spec.name + "' projects exactly one model");
      std::vector<corpus::TaggedSequence> picked;
      std::size_t n_syn = 0, n_non = 0;
      for (const auto& s : data) {
        if (s.source == corpus::Source::kSynthQA && n_syn < spec.per_class) {
          picked.push_back(s);
          ++n_syn;
        } else if (s.source == corpus::Source::kNonSynth && n_non < spec.per_class) {
          picked.push_back(s);
          ++n_non;
        }
      }
      require(n_syn > 0 && n_non > 0, ErrorKind::kData,
              "t-SNE needs both SynthQA and NonSynth documents");
      analysis::TsneOptions opt;
      opt.perplexity = spec.perplexity;
      opt.iterations = spec.iterations;
      opt.seed = seed;
      const auto proj = analysis::tsne(analysis::document_embeddings(models[0], picked), opt);
      std::vector<int> labels;
      std::vector<std::string> names;
      for (const auto& s : picked) {
        labels.push_back(s.source == corpus::Source::kSynthQA ? 0 : 1);
        names.emplace_back(corpus::to_string(s.source));
      }
      write_file(spec.out / "tsne.csv", "# " + prov + "\n" + proj.csv(names));
      json out = meta;
      out["points"] = picked.size();
      out["kl"] = proj.kl;
      out["kl_curve"] = proj.kl_curve;
      out["cluster_overlap"] = analysis::cluster_overlap(proj.points, labels);
      out["centroid_purity"] = analysis::nearest_centroid_purity(proj.points, labels);
      write_file(spec.out / "tsne.json", out.dump(2) + "\n");
      break;
    }
  }
  write_file(spec.out / "provenance.json", meta.dump(2) + "\n");
}

namespace {

std::string node_hash(const ExperimentPlan& plan, const Node& node) {
  json j;
  j["version"] = ULRN_VERSION;
  j["node"] = node.name;
  if (plan.seed) j["seed"] = *plan.seed;
  switch (node.kind) {
    case Node::Kind::kData: j["data"] = plan.data->to_json(); break;
    case Node::Kind::kStage: j["stage"] = std::string(trainer::to_string(plan.stages[node.index].stage)); break;
    case Node::Kind::kAnalysis: j["analysis"] = plan.analyses[node.index].to_json(); break;
  }
  for (const auto& in : node.inputs) j["inputs"].push_back({in.generic_string(), sha256_file(in)});
  for (const auto& out : node.outputs) j["outputs"].push_back(out.generic_string());
  return sha256_hex(j.dump());
}

bool up_to_date(const Node& node, const std::string& hash) {
  if (!fs::exists(node.stamp)) return false;
  for (const auto& o : node.outputs) {
    if (!fs::exists(o)) return false;
  }
  return read_file(node.stamp) == hash + "\n";
}

}  // namespace

RunSummary run_plan(const ExperimentPlan& plan, const Logger& log) {
  const auto order = validate(plan);
  RunSummary summary;
  for (const auto& node : order) {
    const std::string hash = node_hash(plan, node);
    if (up_to_date(node, hash)) {
      summary.skipped.push_back(node.name);
      if (log) log("up to date: " + node.name);
      continue;
    }
    if (log) log("running: " + node.name);
    switch (node.kind) {
      case Node::Kind::kData: generate_data(*plan.data, plan.data_dir); break;
      case Node::Kind::kStage: run_stage(plan.stages[node.index], plan.vocab, plan.seed); break;
      case Node::Kind::kAnalysis:
        run_analysis(plan.analyses[node.index], plan.vocab, plan.seed.value_or(1234));
        break;
    }
    write_file(node.stamp, hash + "\n");
    summary.executed.push_back(node.name);
  }
  return summary;
}

}  // namespace ulrn::plan
