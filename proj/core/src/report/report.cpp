#include "ulrn/report/report.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"
#include "ulrn/report/svg.hpp"

namespace ulrn::report {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Rows of a CSV with '#' comment lines and one header line skipped.
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kFormat, "bad number '" + s + "' in " + path.string());
}

std::vector<double> column(const std::vector<std::vector<std::string>>& rows, std::size_t c,
                           const fs::path& path) {
  std::vector<double> out;
  for (const auto& r : rows) {
    require(r.size() > c, ErrorKind::kFormat, "short row in " + path.string());
    out.push_back(to_double(r[c], path));
  }
  return out;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

std::string config_of(const fs::path& dir) {
  const auto p = dir / "provenance.json";
  return fs::exists(p) ? read_json(p).value("config_hash", std::string("unknown")) : "unknown";
}

struct Pending {
  std::vector<std::string> missing;

  void need(const fs::path& p) {
    if (!fs::exists(p)) missing.push_back(p.string());
  }
};

}  // namespace

ReportResult render_report(const plan::ExperimentPlan& plan, const fs::path& out_dir) {
  using plan::AnalysisKind;
  ReportResult result;

  // Collect everything first so a failure names all missing files at once.
  Pending pending;
  std::map<std::string, std::vector<std::size_t>> present;  // analysis -> model indices
  for (const auto& a : plan.analyses) {
    switch (a.what) {
      case AnalysisKind::kPerplexity:
      case AnalysisKind::kShift:
        for (std::size_t i = 0; i < a.models.size(); ++i) {
          const auto curve = a.out / ("ppl_" + a.labels[i] + ".csv");
          const auto samples = a.out / ("ppl_" + a.labels[i] + "_samples.csv");
          if (!fs::exists(a.models[i]) && !fs::exists(samples)) {
            result.omissions.push_back(a.name + ": " + a.labels[i] + " (checkpoint " +
                                       a.models[i].filename().string() + " not found)");
            continue;
          }
          if (a.what == AnalysisKind::kPerplexity) pending.need(curve);
          pending.need(samples);
          present[a.name].push_back(i);
        }
        break;
      case AnalysisKind::kTokens:
        pending.need(a.out / "token_kde.csv");
        pending.need(a.out / "token_peaks.json");
        break;
      case AnalysisKind::kTsne:
        pending.need(a.out / "tsne.csv");
        pending.need(a.out / "tsne.json");
        break;
    }
  }
  if (!pending.missing.empty()) {
    std::string msg = "report inputs missing:";
    for (const auto& m : pending.missing) msg += "\n  " + m;
    fail(ErrorKind::kIo, msg);
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), ErrorKind::kIo,
          "cannot create output directory " + out_dir.string());

  std::string md = "# Unlearning reproduction report\n\n";
  md += "Generated by ulrn " ULRN_VERSION ".\n";
  auto emit = [&](const fs::path& p, const std::string& text) {
    write_file(p, text);
    result.files.push_back(p);
  };

  for (const auto& a : plan.analyses) {
    const std::string hash = config_of(a.out);
    const std::string prov = plan::provenance(hash, "analysis " + a.name);
    md += "\n## " + a.name + " (" + std::string(plan::to_string(a.what)) + ")\n\n";
    md += "<!-- " + prov + " -->\n\n";
    switch (a.what) {
      case AnalysisKind::kPerplexity:
      case AnalysisKind::kShift: {
        const auto& idx = present[a.name];
        LinePlot plot;
        plot.title = "Perplexity distribution: " + a.name;
        plot.x_label = "perplexity";
        plot.y_label = "density";
        md += "Corpus: `" + a.corpora[0].filename().string() + "`\n\n";
        md += "| model | mean | variance | mean change | variance ratio | KS |\n";
        md += "|---|---:|---:|---:|---:|---:|\n";
        std::vector<double> reference;
        for (std::size_t n = 0; n < idx.size(); ++n) {
          const std::size_t i = idx[n];
          const auto sp = a.out / ("ppl_" + a.labels[i] + "_samples.csv");
          const auto samples = column(read_csv(sp), 1, sp);
          require(!samples.empty(), ErrorKind::kFormat, sp.string() + " has no rows");
          md += "| " + a.labels[i] + " | " + fmt("%.3f", analysis::mean(samples)) + " | " +
                fmt("%.3f", analysis::variance(samples)) + " | ";
          if (n == 0) {
            reference = samples;
            md += "reference | 1 | 0 |\n";
          } else {
            const auto m = analysis::shift_metrics(reference, samples);
            md += fmt("%+.1f%%", 100.0 * m.mean_shift / analysis::mean(reference)) + " | " +
                  fmt("%.3f", m.variance_ratio) + " | " + fmt("%.3f", m.ks) + " |\n";
          }
          if (a.what == AnalysisKind::kPerplexity) {
            const auto cp = a.out / ("ppl_" + a.labels[i] + ".csv");
            const auto rows = read_csv(cp);
            plot.series.push_back({a.labels[i], column(rows, 0, cp), column(rows, 1, cp)});
          }
        }
        if (!idx.empty() && idx.front() != 0) {
          md += "\nThe reference model `" + a.labels[0] +
                "` is missing; ratios are relative to the first available model.\n";
        }
        for (const auto& o : result.omissions) {
          if (o.rfind(a.name + ": ", 0) == 0) {
            md += "\n**Omitted:** " + o.substr(a.name.size() + 2) + "\n";
            plot.notes.push_back("omitted: " + o.substr(a.name.size() + 2));
          }
        }
        if (a.what == AnalysisKind::kPerplexity) {
          plot.notes.insert(plot.notes.begin(), "Gaussian KDE, Scott bandwidth, 99.5th percentile clip");
          const auto file = out_dir / ("ppl_" + a.name + ".svg");
          emit(file, line_svg(plot, prov));
          md += "\n![" + a.name + "](" + file.filename().string() + ")\n";
        }
        break;
      }
      case AnalysisKind::kTokens: {
        const auto kp = a.out / "token_kde.csv";
        const auto rows = read_csv(kp);
        const auto peaks = read_json(a.out / "token_peaks.json");
        LinePlot plot;
        plot.title = "Token-ID density: " + a.name;
        plot.x_label = "token id";
        plot.y_label = "density";
        const auto x = column(rows, 0, kp);
        plot.series.push_back({"SynthQA", x, column(rows, 1, kp)});
        plot.series.push_back({"NonSynth", x, column(rows, 2, kp)});
        plot.notes.push_back("Gaussian KDE, bandwidth " + fmt("%.3g", peaks.value("bandwidth", 0.0)) +
                             " token ids");
        std::string names;
        for (const auto& p : peaks["synth_peaks"]) {
          names += (names.empty() ? "" : ", ") + p["token"].get<std::string>();
        }
        plot.notes.push_back("SynthQA peaks: " + (names.empty() ? std::string("none") : names));
        md += "SynthQA peaks (" + std::to_string(peaks["synth_peaks"].size()) + "): " +
              (names.empty() ? std::string("none") : names) + "\n\n";
        md += "NonSynth peaks: " + std::to_string(peaks["nonsynth_peaks"].size()) + "\n";
        const auto file = out_dir / ("tokens_" + a.name + ".svg");
        emit(file, line_svg(plot, prov));
        md += "\n![" + a.name + "](" + file.filename().string() + ")\n";
        break;
      }
      case AnalysisKind::kTsne: {
        const auto tp = a.out / "tsne.csv";
        const auto rows = read_csv(tp);
        const auto info = read_json(a.out / "tsne.json");
        ScatterPlot plot;
        plot.title = "t-SNE of document embeddings: " + a.name;
        std::map<std::string, int> classes;
        for (const auto& r : rows) {
          require(r.size() >= 3, ErrorKind::kFormat, "short row in " + tp.string());
          const auto [it, fresh] = classes.emplace(r[2], static_cast<int>(classes.size()));
          if (fresh) plot.class_names.push_back(r[2]);
          plot.points.push_back({to_double(r[0], tp), to_double(r[1], tp)});
          plot.labels.push_back(it->second);
        }
        const double overlap = info.value("cluster_overlap", 0.0);
        const double purity = info.value("centroid_purity", 0.0);
        plot.notes.push_back("cluster overlap " + fmt("%.3f", overlap) + ", centroid purity " +
                             fmt("%.3f", purity) + ", KL " + fmt("%.3f", info.value("kl", 0.0)));
        md += "| points | cluster overlap | centroid purity | KL |\n|---:|---:|---:|---:|\n";
        md += "| " + std::to_string(plot.points.size()) + " | " + fmt("%.3f", overlap) + " | " +
              fmt("%.3f", purity) + " | " + fmt("%.3f", info.value("kl", 0.0)) + " |\n";
        const auto file = out_dir / ("tsne_" + a.name + ".svg");
        emit(file, scatter_svg(plot, prov));
        md += "\n![" + a.name + "](" + file.filename().string() + ")\n";
        break;
      }
    }
  }
  if (!result.omissions.empty()) {
    md += "\n## Omissions\n\n";
    for (const auto& o : result.omissions) md += "- " + o + "\n";
  }
  emit(out_dir / "summary.md", md);
  return result;
}

}  // namespace ulrn::report
