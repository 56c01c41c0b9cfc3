// Acceptance suite: one PASS/FAIL line per criterion.
//
//   ulrn_acceptance <ulrn-binary> <desk-config-dir> <work-dir> [criterion...]
//
// The desk plan in <desk-config-dir> is copied into <work-dir>/desk and run
// node by node; criteria 3-8 read its artifacts. Criterion 9 runs the CLI
// selftest twice and compares bytes.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/corpus/corpus.hpp"
#include "ulrn/corpus/vocabulary.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"
#include "ulrn/losses/losses.hpp"
#include "ulrn/model/transformer.hpp"
#include "ulrn/plan/plan.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ulrn;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------- criterion 1

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.vocab_size = 32;
  c.hidden_size = 16;
  c.ffn_size = 44;
  c.n_heads = 2;
  c.n_layers = 1;
  c.max_context = 16;
  return c;
}

corpus::TokenSequence random_sequence(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(vocab) - 1);
  corpus::TokenSequence s;
  s.ids.push_back(corpus::kBos);
  while (s.ids.size() < n) s.ids.push_back(pick(rng));
  return s;
}

Outcome loss_bounds() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240101);
  std::uniform_real_distribution<double> log_std(std::log(0.02), std::log(4.0));
  std::uniform_int_distribution<std::size_t> len(2, 16);
  double lb_min = INFINITY, ga_min = INFINITY;
  std::size_t instances = 0, negative = 0;
  for (std::uint64_t m = 0; m < 100; ++m) {
    const auto params = model::ModelParameters::initialize(
        tiny_config(), 1000 + m, static_cast<float>(std::exp(log_std(rng))));
    for (int s = 0; s < 100; ++s) {
      const auto seq = random_sequence(rng, len(rng), 32);
      const double lb = losses::forgetting_loss(params, seq);
      const double ga = losses::gradient_ascent_loss(params, seq);
      lb_min = std::min(lb_min, lb);
      ga_min = std::min(ga_min, ga);
      negative += lb < 0.0 ? 1 : 0;
      ++instances;
    }
  }
  const double secs = seconds_since(t0);
  return {negative == 0 && ga_min < -10.0 && secs < 60.0,
          std::to_string(instances) + " instances, min lower-bounded " + fmt(lb_min) +
              ", min gradient-ascent " + fmt(ga_min) + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- criterion 2

// Worst relative error |a - n| / max(|a|, |n|, floor) over every parameter.
double model_gradcheck(const model::ModelParameters& base,
                       const std::function<losses::Term(model::ModelGraph&)>& term,
                       const std::function<double(const model::ModelParameters&)>& value) {
  ad::Graph g;
  model::ModelGraph mg(g, base, true);
  auto t = term(mg);
  g.backward(t.loss);
  const auto grads = mg.gradients();
  double worst = 0.0;
  auto probe = base;
  const float h = 1e-2f;
  for (std::size_t k = 0; k < base.tensors().size(); ++k) {
    auto& w = *probe.mutable_tensors()[k].values;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float keep = w[j];
      auto at = [&](float offset) {
        w[j] = keep + offset;
        return value(probe);
      };
      // Fourth-order central stencil.
      const double numeric = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      w[j] = keep;
      const double a = grads.values[k][j];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-2}));
    }
  }
  return worst;
}

Outcome gradients() {
  const auto t0 = Clock::now();
  auto cfg = tiny_config();
  cfg.ffn_size = 24;
  const auto current = model::ModelParameters::initialize(cfg, 7, 0.3f);
  const auto original = model::ModelParameters::initialize(cfg, 8, 0.3f);
  std::mt19937_64 rng(99);
  const auto seq = random_sequence(rng, 10, cfg.vocab_size);
  std::map<std::string, double> worst;
  worst["forget"] = model_gradcheck(
      current, [&](model::ModelGraph& m) { return losses::forgetting_term(m, seq.ids); },
      [&](const model::ModelParameters& p) { return losses::forgetting_loss(p, seq); });
  worst["ascent"] = model_gradcheck(
      current,
      [&](model::ModelGraph& m) {
        return losses::forgetting_term(m, seq.ids, losses::ForgetLoss::kGradientAscent);
      },
      [&](const model::ModelParameters& p) { return losses::gradient_ascent_loss(p, seq); });
  worst["replay"] = model_gradcheck(
      current, [&](model::ModelGraph& m) { return losses::cross_entropy_term(m, seq.ids); },
      [&](const model::ModelParameters& p) { return losses::replay_loss(p, seq); });
  worst["mitigation"] = model_gradcheck(
      current, [&](model::ModelGraph& m) { return losses::mitigation_term(m, original, seq.ids); },
      [&](const model::ModelParameters& p) { return losses::bias_mitigation_loss(p, original, seq); });
  const double secs = seconds_since(t0);
  bool ok = secs < 300.0;
  std::string detail;
  for (const auto& [name, err] : worst) {
    ok = ok && err < 1e-2;
    detail += name + " " + fmt(err, 3) + ", ";
  }
  return {ok, "max relative error " + detail + std::to_string(current.parameter_count()) +
                  " parameters, " + fmt(secs, 3) + " s"};
}

// ------------------------------------------------------------- desk protocol

struct Desk {
  plan::ExperimentPlan plan;
  std::map<std::string, double> seconds;  // per node name
  std::string error;

  json read(const std::string& rel) const { return json::parse(read_file(plan.root / rel)); }
};

Desk run_desk(const fs::path& config_dir, const fs::path& work) {
  Desk d;
  const fs::path dir = work / "desk";
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(config_dir)) {
    if (entry.is_regular_file()) fs::copy_file(entry.path(), dir / entry.path().filename());
  }
  try {
    d.plan = plan::load_plan(dir / "plan.json");
    const std::uint64_t seed = d.plan.seed.value_or(1234);
    for (const auto& node : plan::validate(d.plan)) {
      const auto t0 = Clock::now();
      std::cout << "  [desk] " << node.name << std::flush;
      switch (node.kind) {
        case plan::Node::Kind::kData: plan::generate_data(*d.plan.data, d.plan.data_dir); break;
        case plan::Node::Kind::kStage:
          plan::run_stage(d.plan.stages[node.index], d.plan.vocab, d.plan.seed);
          break;
        case plan::Node::Kind::kAnalysis:
          plan::run_analysis(d.plan.analyses[node.index], d.plan.vocab, seed);
          break;
      }
      d.seconds[node.name] = seconds_since(t0);
      std::cout << " " << fmt(d.seconds[node.name], 3) << " s" << std::endl;
    }
  } catch (const std::exception& e) {
    d.error = e.what();
  }
  return d;
}

const json& row(const json& shift, const std::string& label) {
  for (const auto& r : shift["rows"]) {
    if (r["label"] == label) return r;
  }
  fail(ErrorKind::kData, "shift table lacks row '" + label + "'");
}

double total_seconds(const Desk& d, std::initializer_list<const char*> nodes) {
  double s = 0.0;
  for (const char* n : nodes) s += d.seconds.at(n);
  return s;
}

Outcome overfitting(const Desk& d) {
  const auto shift = d.read("analysis/instruct/shift.json");
  const auto& synth = row(shift, "synth");
  const double ratio = synth["shift"]["variance_ratio"];
  const double dmu = synth["shift"]["mean_shift"];
  const auto rec = d.read("ckpt/synth.ulrn.json");
  const double frac = rec["synth_token_fraction"];
  const double secs = total_seconds(d, {"gen-data", "base", "synth", "instruct"});
  return {ratio < 0.8 && std::abs(dmu) > 0.0 && secs < 900.0,
          "variance ratio " + fmt(ratio) + ", mean shift " + fmt(dmu) + ", SynthQA token share " +
              fmt(frac, 3) + ", " + fmt(secs, 3) + " s"};
}

Outcome correction(const Desk& d) {
  const auto shift = d.read("analysis/instruct/shift.json");
  const double ratio = row(shift, "unlearned")["shift"]["variance_ratio"];
  const auto ablation = d.read("analysis/ablation/shift.json");
  const double change = row(ablation, "lower_bounded")["mean_change"];
  const auto rec = d.read("ckpt/unlearn.ulrn.json");
  const auto cont = d.read("ckpt/synth.ulrn.json");
  const double budget_share = static_cast<double>(rec["forget_token_budget"].get<std::size_t>()) /
                              cont["tokens_seen"].get<double>();
  const bool weights = rec["weights"]["w_fgt"] == 0.01 && rec["weights"]["w_rpy"] == 1.0 &&
                       rec["weights"]["w_mtn"] == 1.0;
  const double secs = d.seconds.at("unlearn") + d.seconds.at("ablation");
  const bool ok = ratio >= 0.8 && ratio <= 1.25 && change < 0.10 && weights &&
                  std::abs(budget_share - 0.01) < 0.001 && secs < 600.0;
  return {ok, "variance ratio vs base " + fmt(ratio) + ", NonSynth perplexity change " +
                  fmt(100.0 * change, 3) + "%, budget " + fmt(100.0 * budget_share, 3) +
                  "% of continued pretraining (" + std::to_string(rec["forget_tokens"].get<std::size_t>()) +
                  " tokens, " + std::to_string(rec["steps_run"].get<std::size_t>()) + " steps), " +
                  fmt(secs, 3) + " s"};
}

Outcome ablation(const Desk& d) {
  const auto shift = d.read("analysis/ablation/shift.json");
  const double ga = row(shift, "gradient_ascent")["mean_change"];
  const double lb = row(shift, "lower_bounded")["mean_change"];
  const auto rec = d.read("ckpt/unlearn_ga.ulrn.json");
  const double secs = d.seconds.at("unlearn_ga") + d.seconds.at("ablation");
  return {ga > 0.5 && lb < 0.10 && secs < 900.0,
          "NonSynth perplexity change gradient-ascent " + fmt(100.0 * ga, 3) + "%, lower-bounded " +
              fmt(100.0 * lb, 3) + "%, " + fmt(secs, 3) + " s"};
}

bool is_marker(const json& peak) {
  const auto t = peak["token"].get<std::string>();
  return t == "question" || t == "answer";
}

Outcome token_peaks(const Desk& d) {
  const auto peaks = d.read("analysis/tokens/token_peaks.json");
  bool synth_marker = false, nonsynth_marker = false;
  std::string listed;
  for (const auto& p : peaks["synth_peaks"]) {
    synth_marker = synth_marker || is_marker(p);
    if (is_marker(p)) listed += p["token"].get<std::string>() + " (id " + std::to_string(p["id"].get<int>()) + ") ";
  }
  for (const auto& p : peaks["nonsynth_peaks"]) nonsynth_marker = nonsynth_marker || is_marker(p);
  // Determinism: a second run of the same analysis must reproduce the file.
  const plan::AnalysisSpec* found = nullptr;
  for (const auto& a : d.plan.analyses) {
    if (a.name == "tokens") found = &a;
  }
  require(found != nullptr, ErrorKind::kConfig, "desk plan lacks the 'tokens' analysis");
  const auto& spec = *found;
  auto again = spec;
  again.out = spec.out.parent_path() / "tokens_rerun";
  const auto t0 = Clock::now();
  plan::run_analysis(again, d.plan.vocab, d.plan.seed.value_or(1234));
  const double secs = seconds_since(t0);
  const bool same = read_file(spec.out / "token_peaks.json") == read_file(again.out / "token_peaks.json") &&
                    read_file(spec.out / "token_kde.csv") == read_file(again.out / "token_kde.csv");
  return {synth_marker && !nonsynth_marker && same && secs < 60.0,
          "SynthQA marker peaks: " + (listed.empty() ? std::string("none ") : listed) +
              "| NonSynth marker peaks: " + (nonsynth_marker ? "present" : "none") +
              " | rerun identical: " + (same ? "yes" : "no") + ", " + fmt(secs, 3) + " s"};
}

// Held-out accuracy of a logistic probe trained on the even-indexed rows.
double linear_probe(const std::vector<std::vector<float>>& x, const std::vector<int>& y) {
  const std::size_t dim = x.at(0).size();
  std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
  for (const auto& r : x)
    for (std::size_t k = 0; k < dim; ++k) mu[k] += r[k] / static_cast<double>(x.size());
  for (const auto& r : x)
    for (std::size_t k = 0; k < dim; ++k) sd[k] += (r[k] - mu[k]) * (r[k] - mu[k]) / static_cast<double>(x.size());
  auto feature = [&](std::size_t i, std::size_t k) { return (x[i][k] - mu[k]) / std::sqrt(sd[k] + 1e-12); };
  std::vector<double> w(dim + 1, 0.0);
  for (int epoch = 0; epoch < 500; ++epoch) {
    std::vector<double> g(dim + 1, 0.0);
    for (std::size_t i = 0; i < x.size(); i += 2) {
      double z = w[dim];
      for (std::size_t k = 0; k < dim; ++k) z += w[k] * feature(i, k);
      const double err = 1.0 / (1.0 + std::exp(-z)) - y[i];
      for (std::size_t k = 0; k < dim; ++k) g[k] += err * feature(i, k);
      g[dim] += err;
    }
    for (std::size_t k = 0; k <= dim; ++k) w[k] -= 0.1 * (g[k] / static_cast<double>(x.size() / 2) + 1e-3 * w[k]);
  }
  std::size_t right = 0, total = 0;
  for (std::size_t i = 1; i < x.size(); i += 2) {
    double z = w[dim];
    for (std::size_t k = 0; k < dim; ++k) z += w[k] * feature(i, k);
    right += (z > 0) == (y[i] == 1) ? 1 : 0;
    ++total;
  }
  return static_cast<double>(right) / static_cast<double>(total);
}

Outcome separation(const Desk& d) {
  const auto t = d.read("analysis/embeddings/tsne.json");
  const double overlap = t["cluster_overlap"];
  const std::size_t points = t["points"];

  // Sanity oracle: two Gaussian blobs in 64 dimensions, 200 points each.
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<float>> x;
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 200; ++i) {
      std::vector<float> v(64);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<float>(nd(rng) + (k < 8 ? 3.0 * c : 0.0));
      x.push_back(v);
      labels.push_back(c);
    }
  }
  analysis::TsneOptions opt;
  opt.seed = 11;
  const auto proj = analysis::tsne(x, opt);
  const double purity = analysis::nearest_centroid_purity(proj.points, labels);

  // Reported alongside: a linear probe on the raw embeddings of the same documents.
  const plan::AnalysisSpec* spec = nullptr;
  for (const auto& a : d.plan.analyses) {
    if (a.name == "embeddings") spec = &a;
  }
  double probe = 0.0;
  if (spec != nullptr) {
    const auto vocab = corpus::Vocabulary::load(d.plan.vocab);
    corpus::Corpus all;
    for (const auto& c : spec->corpora) all = corpus::concatenate(all, corpus::read_jsonl(c));
    const auto data = corpus::tokenize_corpus(all, vocab);
    std::vector<corpus::TaggedSequence> picked;
    std::vector<int> y;
    for (const auto& s : data) {
      picked.push_back(s);
      y.push_back(s.source == corpus::Source::kSynthQA ? 1 : 0);
    }
    probe = linear_probe(analysis::document_embeddings(model::load_checkpoint(spec->models.at(0)), picked), y);
  }
  const double secs = d.seconds.at("embeddings") + seconds_since(t0);
  return {overlap < 0.6 && points >= 400 && purity >= 0.95 && secs < 600.0,
          "cluster overlap " + fmt(overlap) + " on " + std::to_string(points) +
              " documents, oracle purity " + fmt(purity) + ", linear probe accuracy " + fmt(probe) +
              ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- criterion 8

// Trapezoid integral of column `col` of a CSV whose first column is x.
double integrate_csv(const fs::path& path, std::size_t col) {
  std::istringstream in(read_file(path));
  std::string line;
  bool header = true;
  double area = 0.0, px = 0.0, py = 0.0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    const double x = cells.at(0), y = cells.at(col);
    if (!first) area += 0.5 * (x - px) * (y + py);
    px = x;
    py = y;
    first = false;
  }
  return area;
}

Outcome instruments(const Desk& d) {
  const auto t0 = Clock::now();
  std::vector<std::string> problems;
  std::size_t curves = 0;
  double worst_integral = 0.0;
  auto check_integral = [&](const fs::path& p, std::size_t col) {
    const double a = integrate_csv(p, col);
    worst_integral = std::max(worst_integral, std::abs(a - 1.0));
    ++curves;
    if (std::abs(a - 1.0) > 0.02) problems.push_back(p.filename().string() + " integrates to " + fmt(a));
  };
  for (const auto& entry : fs::recursive_directory_iterator(d.plan.root / "analysis")) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("ppl_") && name.ends_with(".csv") && !name.ends_with("_samples.csv")) {
      check_integral(entry.path(), 1);
    } else if (name == "token_kde.csv") {
      check_integral(entry.path(), 1);
      check_integral(entry.path(), 2);
    }
  }

  // Standard-normal oracle on 10^4 draws.
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> draws(10000);
  for (auto& v : draws) v = nd(rng);
  const auto curve = analysis::kde(draws);
  double sup = 0.0;
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    const double x = curve.grid[i];
    sup = std::max(sup, std::abs(curve.density[i] - std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI)));
  }
  if (sup >= 0.02) problems.push_back("normal oracle sup-norm " + fmt(sup));
  if (std::abs(curve.integral() - 1.0) > 0.02) problems.push_back("normal KDE integral off");

  // KL non-negativity, including distributions with zero entries.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(2, 64);
  double kl_min = INFINITY;
  for (int i = 0; i < 1000; ++i) {
    const int n = size(rng);
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (int k = 0; k < n; ++k) {
      p[k] = u(rng) < 0.1 ? 0.0 : std::pow(u(rng), 3.0);
      q[k] = u(rng) < 0.1 ? 0.0 : std::pow(u(rng), 3.0);
      sp += p[k];
      sq += q[k];
    }
    if (sp == 0 || sq == 0) continue;
    for (int k = 0; k < n; ++k) {
      p[k] /= sp;
      q[k] /= sq;
    }
    kl_min = std::min(kl_min, losses::kl_divergence(p, q));
  }
  if (kl_min < 0.0) problems.push_back("negative KL " + fmt(kl_min));

  // Exact identity, translation and scaling cases.
  const std::vector<double> a = {1, 2, 3, 5, 8, 13, 21};
  std::vector<double> shifted, scaled, far;
  for (double v : a) {
    shifted.push_back(v + 4);
    scaled.push_back(2 * v);
    far.push_back(v + 100);
  }
  const auto same = analysis::shift_metrics(a, a);
  if (!(same.mean_shift == 0.0 && same.variance_ratio == 1.0 && same.ks == 0.0))
    problems.push_back("identity case not exact");
  const auto tr = analysis::shift_metrics(a, shifted);
  if (!(tr.mean_shift == 4.0 && tr.variance_ratio == 1.0)) problems.push_back("translation case not exact");
  const auto sc = analysis::shift_metrics(a, scaled);
  if (!(sc.mean_shift == analysis::mean(a) && sc.variance_ratio == 4.0))
    problems.push_back("scaling case not exact");
  if (analysis::ks_statistic(a, far) != 1.0) problems.push_back("disjoint KS not 1");
  const auto back = analysis::shift_metrics(shifted, a);
  if (!(back.mean_shift == -tr.mean_shift && back.ks == tr.ks)) problems.push_back("swap asymmetry");

  std::string detail = std::to_string(curves) + " pipeline curves, worst integral error " +
                       fmt(worst_integral, 3) + ", normal sup-norm " + fmt(sup, 3) + ", min KL " +
                       fmt(kl_min, 3) + ", " + fmt(seconds_since(t0), 3) + " s";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() && curves >= 5, detail};
}

// ---------------------------------------------------------------- criterion 9

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

std::map<std::string, std::string> collect(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".ulrn" || ext == ".csv" || ext == ".svg") {
      files[fs::relative(entry.path(), dir).generic_string()] = sha256_file(entry.path());
    }
  }
  return files;
}

Outcome reproducibility(const fs::path& ulrn_bin, const fs::path& work) {
  const auto t0 = Clock::now();
  std::array<std::map<std::string, std::string>, 2> runs;
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = work / ("selftest_" + std::to_string(i));
    std::error_code ec;
    fs::remove_all(dir, ec);
    const std::string cmd = shell_quote(ulrn_bin.string()) + " --threads 1 --seed 77 selftest --out " +
                            shell_quote(dir.string()) + " > " + shell_quote((work / ("selftest_" + std::to_string(i) + ".log")).string()) + " 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      return {false, "selftest run " + std::to_string(i + 1) + " failed; see selftest_" + std::to_string(i) + ".log"};
    }
    runs[i] = collect(dir);
  }
  std::size_t differing = 0, counts[3] = {0, 0, 0};
  for (const auto& [name, hash] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != hash) ++differing;
    if (name.ends_with(".ulrn")) ++counts[0];
    if (name.ends_with(".csv")) ++counts[1];
    if (name.ends_with(".svg")) ++counts[2];
  }
  const bool same_set = runs[0].size() == runs[1].size();
  return {differing == 0 && same_set && counts[0] > 0 && counts[1] > 0 && counts[2] > 0,
          std::to_string(counts[0]) + " checkpoints, " + std::to_string(counts[1]) + " CSVs, " +
              std::to_string(counts[2]) + " SVGs compared, " + std::to_string(differing) +
              " differ, " + fmt(seconds_since(t0), 3) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 4) {
    std::cerr << "usage: ulrn_acceptance <ulrn-binary> <desk-config-dir> <work-dir> [criterion...]\n";
    return 2;
  }
  const fs::path ulrn_bin = argv[1], config_dir = argv[2], work = argv[3];
  std::set<int> only;
  for (int i = 4; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int c) { return only.empty() || only.contains(c); };
  fs::create_directories(work);

  const std::array<const char*, 9> names = {
      "loss-formula fidelity",     "gradient correctness", "overfitting induction",
      "unlearning correction",     "gradient-ascent ablation", "structural-token peaks",
      "embedding separation",      "numerical instruments", "reproducibility"};
  int failed = 0;
  auto report = [&](int c, const std::function<Outcome()>& fn) {
    if (!wanted(c)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " " << names[c - 1] << ": "
              << o.detail << std::endl;
    if (!o.pass) ++failed;
  };

  report(1, loss_bounds);
  report(2, gradients);

  const bool desk_needed = wanted(3) || wanted(4) || wanted(5) || wanted(6) || wanted(7) || wanted(8);
  Desk desk;
  if (desk_needed) desk = run_desk(config_dir, work);
  auto with_desk = [&](const std::function<Outcome(const Desk&)>& fn) {
    return [&, fn]() -> Outcome {
      if (!desk.error.empty()) return {false, "desk plan failed: " + desk.error};
      return fn(desk);
    };
  };
  report(3, with_desk(overfitting));
  report(4, with_desk(correction));
  report(5, with_desk(ablation));
  report(6, with_desk(token_peaks));
  report(7, with_desk(separation));
  report(8, with_desk(instruments));
  report(9, [&] { return reproducibility(ulrn_bin, work); });

  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
