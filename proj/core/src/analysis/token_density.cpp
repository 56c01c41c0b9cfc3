#include <cmath>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/errors.hpp"

namespace ulrn::analysis {

namespace {

// Grid step in id units; ids fall on every fourth point.
constexpr double kStep = 0.25;
constexpr std::size_t kPerId = 4;
constexpr double kPad = 4.0;

KdeCurve curve_from_counts(const std::vector<std::size_t>& counts, double h) {
  KdeCurve c;
  c.bandwidth = h;
  for (std::size_t n : counts) c.samples += n;
  const double pad = std::ceil(kPad * h);
  const double lo = -pad, hi = static_cast<double>(counts.size() - 1) + pad;
  const auto points = static_cast<std::size_t>(std::llround((hi - lo) / kStep)) + 1;
  c.grid.resize(points);
  for (std::size_t i = 0; i < points; ++i) c.grid[i] = lo + kStep * static_cast<double>(i);
  c.density = kde_counts(counts, h, c.grid);
  return c;
}

double at_id(const KdeCurve& c, std::size_t id) {
  const auto offset = static_cast<std::size_t>(std::llround(-c.grid.front() / kStep));
  return c.density[offset + id * kPerId];
}

std::vector<double> per_id(const KdeCurve& c, std::size_t v) {
  std::vector<double> out(v);
  for (std::size_t id = 0; id < v; ++id) out[id] = at_id(c, id);
  return out;
}

}  // namespace

std::vector<TokenPeak> find_peaks(const std::vector<double>& density,
                                  const std::vector<double>& other,
                                  const corpus::Vocabulary& vocab, double ratio) {
  require(density.size() == other.size() && density.size() == vocab.size(), ErrorKind::kShape,
          "density curves must cover the vocabulary");
  const double uniform = 1.0 / static_cast<double>(vocab.size());
  std::vector<TokenPeak> peaks;
  for (std::size_t id = corpus::kSpecialCount; id < density.size(); ++id) {
    const double d = density[id];
    const bool local_max = (id == 0 || d >= density[id - 1]) &&
                           (id + 1 == density.size() || d >= density[id + 1]);
    if (local_max && d >= uniform && d >= ratio * other[id]) {
      peaks.push_back({static_cast<corpus::TokenId>(id), vocab.token(static_cast<corpus::TokenId>(id)),
                       d, other[id]});
    }
  }
  return peaks;
}

TokenDensityReport token_id_density(std::span<const corpus::TaggedSequence> data,
                                    const corpus::Vocabulary& vocab, double bandwidth,
                                    double ratio) {
  const std::size_t v = vocab.size();
  TokenDensityReport r;
  r.synth_counts.assign(v, 0);
  r.nonsynth_counts.assign(v, 0);
  for (const auto& seq : data) {
    std::vector<std::size_t>* counts = nullptr;
    if (seq.source == corpus::Source::kSynthQA) counts = &r.synth_counts;
    if (seq.source == corpus::Source::kNonSynth) counts = &r.nonsynth_counts;
    if (counts == nullptr) continue;
    for (corpus::TokenId id : seq.tokens.ids) {
      require(id >= 0 && static_cast<std::size_t>(id) < v, ErrorKind::kVocabulary,
              "token id " + std::to_string(id) + " outside the vocabulary");
      if (static_cast<std::size_t>(id) >= corpus::kSpecialCount) ++(*counts)[static_cast<std::size_t>(id)];
    }
  }
  auto total = [](const std::vector<std::size_t>& c) {
    std::size_t n = 0;
    for (std::size_t x : c) n += x;
    return n;
  };
  require(total(r.synth_counts) > 0, ErrorKind::kData, "no SynthQA word tokens to analyse");
  require(total(r.nonsynth_counts) > 0, ErrorKind::kData, "no NonSynth word tokens to analyse");
  r.synth = curve_from_counts(r.synth_counts, bandwidth);
  r.nonsynth = curve_from_counts(r.nonsynth_counts, bandwidth);
  const auto s = per_id(r.synth, v), ns = per_id(r.nonsynth, v);
  r.synth_peaks = find_peaks(s, ns, vocab, ratio);
  r.nonsynth_peaks = find_peaks(ns, s, vocab, ratio);
  return r;
}

std::string TokenDensityReport::histogram_csv() const {
  std::string out = "id,synth_count,nonsynth_count\n";
  for (std::size_t id = 0; id < synth_counts.size(); ++id) {
    out += std::to_string(id) + ',' + std::to_string(synth_counts[id]) + ',' +
           std::to_string(nonsynth_counts[id]) + '\n';
  }
  return out;
}

}  // namespace ulrn::analysis
