#include "selftest.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ulrn/corpus/corpus.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"
#include "ulrn/model/transformer.hpp"
#include "ulrn/plan/plan.hpp"
#include "ulrn/report/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ulrn;

namespace {

constexpr const char* kModel =
    "hidden_size = 16\nffn_size = 44\nn_heads = 2\nn_layers = 1\nmax_context = 48\n"
    "context = 48\nbatch_size = 4\n";

void write_configs(const fs::path& dir) {
  write_file(dir / "pretrain.cfg",
             std::string("stage = pretrain\nsteps = 40\nlr = 3e-3\n") + kModel);
  write_file(dir / "continue.cfg", "stage = continue\nsteps = 20\ncontext = 48\nbatch_size = 4\n");
  write_file(dir / "sft.cfg", "stage = sft\ncontext = 48\nbatch_size = 4\n");
  const std::string unlearn =
      "stage = unlearn\ncontext = 48\nbatch_size = 2\nforget_token_budget = 300\n";
  write_file(dir / "unlearn.cfg", unlearn);
  write_file(dir / "unlearn_ga.cfg", unlearn + "forget_loss = gradient_ascent\n");
}

json tiny_plan() {
  auto stage = [](const char* name, const char* kind, const char* config, const char* in,
                  std::vector<std::string> data, const char* out) {
    json s = {{"name", name}, {"stage", kind}, {"config", config}, {"data", data}, {"out", out}};
    if (in != nullptr) s["in"] = in;
    return s;
  };
  json p;
  p["data"] = {{"dir", "data"},       {"n_docs", 120},     {"n_synth", 60},
               {"n_instruct", 40},    {"n_heldout", 40},   {"vocab_size", 400},
               {"synth_fraction", 0.05}, {"max_tokens", 80}};
  p["stages"] = {
      stage("base", "pretrain", "pretrain.cfg", nullptr, {"data/nonsynth.jsonl"}, "ckpt/base.ulrn"),
      stage("synth", "continue", "continue.cfg", "ckpt/base.ulrn", {"data/mix.jsonl"},
            "ckpt/synth.ulrn"),
      stage("chat", "sft", "sft.cfg", "ckpt/synth.ulrn", {"data/instruct.jsonl"}, "ckpt/chat.ulrn"),
      stage("unlearn", "unlearn", "unlearn.cfg", "ckpt/synth.ulrn",
            {"data/synthqa.jsonl", "data/nonsynth.jsonl"}, "ckpt/unlearn.ulrn"),
      stage("unlearn_ga", "unlearn", "unlearn_ga.cfg", "ckpt/synth.ulrn",
            {"data/synthqa.jsonl", "data/nonsynth.jsonl"}, "ckpt/unlearn_ga.ulrn")};
  p["analyses"] = {
      {{"name", "instruct"},
       {"what", "ppl"},
       {"models", {"ckpt/base.ulrn", "ckpt/synth.ulrn", "ckpt/unlearn.ulrn"}},
       {"labels", {"base", "synth", "unlearned"}},
       {"corpora", {"data/instruct_heldout.jsonl"}},
       {"out", "analysis/instruct"}},
      {{"name", "ablation"},
       {"what", "shift"},
       {"models", {"ckpt/synth.ulrn", "ckpt/unlearn.ulrn", "ckpt/unlearn_ga.ulrn"}},
       {"labels", {"synth", "lower_bounded", "gradient_ascent"}},
       {"corpora", {"data/nonsynth_heldout.jsonl"}},
       {"out", "analysis/ablation"}},
      {{"name", "tokens"},
       {"what", "tokens"},
       {"corpora", {"data/synthqa.jsonl", "data/nonsynth.jsonl"}},
       {"out", "analysis/tokens"}},
      {{"name", "embeddings"},
       {"what", "tsne"},
       {"models", {"ckpt/synth.ulrn"}},
       {"corpora", {"data/synthqa_heldout.jsonl", "data/nonsynth_heldout.jsonl"}},
       {"per_class", 30},
       {"perplexity", 10.0},
       {"iterations", 300},
       {"out", "analysis/embeddings"}}};
  return p;
}

struct Checks {
  int failed = 0;

  void operator()(bool ok, const std::string& what) {
    std::cout << (ok ? "PASS " : "FAIL ") << what << "\n";
    if (!ok) ++failed;
  }
};

double trapezoid(const fs::path& csv) {
  double area = 0.0, px = 0.0, py = 0.0;
  bool first = true, header = true;
  std::istringstream in(read_file(csv));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    const double x = std::stod(line.substr(0, comma)), y = std::stod(line.substr(comma + 1));
    if (!first) area += 0.5 * (x - px) * (y + py);
    px = x;
    py = y;
    first = false;
  }
  return area;
}

}  // namespace

int run_selftest(const fs::path& dir, std::uint64_t seed,
                 const std::function<void(const std::string&)>& log) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create " + dir.string());
  write_configs(dir);
  json p = tiny_plan();
  p["seed"] = seed;
  write_file(dir / "plan.json", p.dump(2) + "\n");

  Checks check;
  const auto plan = plan::load_plan(dir / "plan.json");
  const auto first = plan::run_plan(plan, log);
  check(first.executed.size() + first.skipped.size() == 10, "plan completes all ten nodes");

  const auto mixed = corpus::read_jsonl(dir / "data/mix.jsonl");
  check(mixed.count(corpus::Source::kSynthQA) == 6 && mixed.size() == 126,
        "mixed corpus holds exactly 6 SynthQA documents out of 126");

  for (const char* name : {"base", "synth", "chat", "unlearn", "unlearn_ga"}) {
    const auto path = dir / "ckpt" / (std::string(name) + ".ulrn");
    const auto params = model::load_checkpoint(path);
    check(model::serialize_checkpoint(params) == read_file(path),
          std::string("checkpoint round trip: ") + name);
  }

  const auto record = json::parse(read_file(plan::record_path(dir / "ckpt/unlearn.ulrn")));
  check(record["weights"]["w_fgt"] == 0.01 && record["weights"]["w_rpy"] == 1.0 &&
            record["weights"]["w_mtn"] == 1.0,
        "unlearn record carries weights 0.01/1/1");
  bool bounded = true;
  for (const auto& v : record["curves"]["fgt"]) bounded = bounded && v.get<double>() >= 0.0;
  check(bounded, "lower-bounded forgetting loss stays non-negative");
  const auto ga = json::parse(read_file(plan::record_path(dir / "ckpt/unlearn_ga.ulrn")));
  bool negative = true;
  for (const auto& v : ga["curves"]["fgt"]) negative = negative && v.get<double>() <= 0.0;
  check(negative, "gradient-ascent forgetting term is non-positive");

  for (const char* label : {"base", "synth", "unlearned"}) {
    const double area = trapezoid(dir / "analysis/instruct" / (std::string("ppl_") + label + ".csv"));
    check(std::abs(area - 1.0) <= 0.02, std::string("perplexity KDE integrates to 1: ") + label);
  }
  const auto shift = json::parse(read_file(dir / "analysis/instruct/shift.json"));
  check(shift["rows"].size() == 3, "shift table has three models");
  const auto peaks = json::parse(read_file(dir / "analysis/tokens/token_peaks.json"));
  bool marker = false;
  for (const auto& pk : peaks["synth_peaks"]) {
    const auto t = pk["token"].get<std::string>();
    marker = marker || t == "question" || t == "answer";
  }
  check(marker, "SynthQA token density peaks at a question/answer marker");
  const auto tsne = json::parse(read_file(dir / "analysis/embeddings/tsne.json"));
  check(tsne["points"] == 60 && std::isfinite(tsne["kl"].get<double>()), "t-SNE projection finite");

  const auto report = report::render_report(plan, dir / "report");
  check(report.files.size() == 4 && report.omissions.empty(), "report renders three figures and a summary");

  const auto second = plan::run_plan(plan, log);
  check(second.executed.empty(), "rerun of a completed plan trains nothing");

  std::cout << (check.failed == 0 ? "selftest passed" : "selftest FAILED: " +
                                                             std::to_string(check.failed) + " checks")
            << "\n";
  return check.failed;
}
