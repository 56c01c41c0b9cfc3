#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "selftest.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/parallel.hpp"
#include "ulrn/plan/plan.hpp"
#include "ulrn/report/report.hpp"

namespace fs = std::filesystem;
using namespace ulrn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;
constexpr int kExitData = 5;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitUsage;
    case ErrorKind::kDivergence: return kExitDivergence;
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
    case ErrorKind::kTruncated:
    case ErrorKind::kIntegrity: return kExitIo;
    case ErrorKind::kData:
    case ErrorKind::kContract:
    case ErrorKind::kShape:
    case ErrorKind::kVocabulary:
    case ErrorKind::kLength:
    case ErrorKind::kCapacity: return kExitData;
    case ErrorKind::kState:
    case ErrorKind::kIndex: return 1;
  }
  return 1;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::size_t threads = 0;
};

void say(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << "[ulrn] " << msg << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-data overfitting and unlearning at desk scale"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ULRN_VERSION);
  Globals g;
  app.add_option("--seed", g.seed, "Override every seed");
  app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write the generated corpora and vocabulary");
  plan::DataOptions data;
  fs::path data_out;
  gen->add_option("--out-dir", data_out, "Output directory")->required();
  gen->add_option("--n-docs", data.n_docs, "NonSynth documents")->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen->add_option("--synth-fraction", data.synth_fraction, "SynthQA share of the mixed corpus")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--n-synth", data.n_synth, "SynthQA pool size (0 = automatic)");
  gen->add_option("--n-instruct", data.n_instruct, "Instruction pairs (0 = automatic)");
  gen->add_option("--n-heldout", data.n_heldout, "Held-out documents per class")->capture_default_str();
  gen->add_option("--vocab-size", data.vocab_size, "Vocabulary cap")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Run one training stage");
  std::string stage_name;
  plan::StageSpec stage;
  fs::path train_vocab, train_in;
  train->add_option("--stage", stage_name, "pretrain | continue | sft | unlearn")
      ->required()
      ->check(CLI::IsMember({"pretrain", "continue", "sft", "unlearn"}));
  train->add_option("--config", stage.config, "Stage config file")->required();
  train->add_option("--in", train_in, "Input checkpoint");
  train->add_option("--out", stage.out, "Output checkpoint")->required();
  train->add_option("--data", stage.data, "Corpus files (JSONL)")->required();
  train->add_option("--vocab", train_vocab, "Vocabulary (default: vocab.tsv beside the first corpus)");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Compute distribution and embedding analyses");
  plan::AnalysisSpec an;
  std::string what;
  fs::path analyze_vocab;
  analyze->add_option("--what", what, "ppl | tokens | tsne | shift")
      ->required()
      ->check(CLI::IsMember({"ppl", "tokens", "tsne", "shift"}));
  analyze->add_option("--model", an.models, "Checkpoints");
  analyze->add_option("--label", an.labels, "Display names, one per model");
  analyze->add_option("--corpus", an.corpora, "Corpus files (JSONL)")->required();
  analyze->add_option("--out", an.out, "Output directory")->required();
  analyze->add_option("--vocab", analyze_vocab, "Vocabulary (default: vocab.tsv beside the first corpus)");
  analyze->add_option("--per-class", an.per_class, "t-SNE documents per source")->capture_default_str();
  analyze->add_option("--perplexity", an.perplexity, "t-SNE perplexity")->capture_default_str();
  analyze->add_option("--iterations", an.iterations, "t-SNE iterations")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Execute a plan; up-to-date nodes are skipped");
  fs::path run_plan_path;
  run->add_option("--plan", run_plan_path, "Plan JSON")->required();

  // report
  auto* rep = app.add_subcommand("report", "Render figures and summary from plan artifacts");
  fs::path report_plan, report_out;
  rep->add_option("--plan", report_plan, "Plan JSON")->required();
  rep->add_option("--out", report_out, "Output directory")->required();

  // selftest
  auto* self = app.add_subcommand("selftest", "Run a tiny plan end to end and check invariants");
  fs::path self_dir = "selftest";
  self->add_option("--out", self_dir, "Working directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  set_thread_count(g.threads);
  const auto log = [&](const std::string& m) { say(g, m); };
  try {
    if (*gen) {
      if (data.synth_fraction >= 1.0) {
        std::cerr << "error: --synth-fraction must be below 1\n";
        return kExitUsage;
      }
      if (g.seed) data.seed = *g.seed;
      plan::generate_data(data, data_out);
      std::cout << "wrote corpora to " << data_out.string() << "\n";
    } else if (*train) {
      stage.stage = trainer::parse_stage(stage_name);
      stage.name = stage_name;
      if (stage.stage != trainer::Stage::kPretrain) {
        if (train_in.empty()) {
          std::cerr << "error: --stage " << stage_name << " requires --in\n";
          return kExitUsage;
        }
        stage.in = train_in;
      } else if (!train_in.empty()) {
        std::cerr << "error: --stage pretrain takes no --in\n";
        return kExitUsage;
      }
      if (train_vocab.empty()) train_vocab = stage.data.front().parent_path() / "vocab.tsv";
      say(g, "training " + stage_name + " -> " + stage.out.string());
      const auto record = plan::run_stage(stage, train_vocab, g.seed);
      std::cout << "wrote " << stage.out.string() << " (" << record.steps.size() << " steps, final loss "
                << (record.steps.empty() ? 0.0 : record.steps.back().loss.total) << ")\n";
    } else if (*analyze) {
      an.name = what;
      an.what = plan::parse_analysis(what);
      if (an.labels.empty()) {
        for (const auto& m : an.models) an.labels.push_back(m.stem().string());
      }
      if (an.labels.size() != an.models.size()) {
        std::cerr << "error: --label must be given once per --model\n";
        return kExitUsage;
      }
      if (analyze_vocab.empty()) analyze_vocab = an.corpora.front().parent_path() / "vocab.tsv";
      plan::run_analysis(an, analyze_vocab, g.seed.value_or(1234));
      std::cout << "wrote " << what << " artifacts to " << an.out.string() << "\n";
    } else if (*run) {
      auto p = plan::load_plan(run_plan_path);
      if (g.seed) p.seed = g.seed;
      const auto summary = plan::run_plan(p, [&](const std::string& m) {
        say(g, m);
      });
      std::cout << "executed " << summary.executed.size() << ", up to date "
                << summary.skipped.size() << "\n";
    } else if (*rep) {
      const auto p = plan::load_plan(report_plan);
      const auto r = report::render_report(p, report_out);
      for (const auto& f : r.files) std::cout << "wrote " << f.string() << "\n";
      for (const auto& o : r.omissions) std::cout << "omitted " << o << "\n";
    } else if (*self) {
      const int failed = run_selftest(self_dir, g.seed.value_or(1234), log);
      return failed == 0 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
