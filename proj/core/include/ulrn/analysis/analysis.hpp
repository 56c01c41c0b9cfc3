#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ulrn/corpus/corpus.hpp"
#include "ulrn/corpus/vocabulary.hpp"
#include "ulrn/model/transformer.hpp"

namespace ulrn::analysis {

// ---- kernel density estimation ----

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  std::size_t samples = 0;

  double integral() const;  // trapezoidal rule over the grid
  std::string csv() const;  // "x,density" rows
};

// h = n^(-1/5) * sample standard deviation. Zero spread is a kContract error.
double scott_bandwidth(std::span<const double> samples);

// Gaussian KDE evaluated on grid_size evenly spaced points spanning the
// sample range padded by 4 bandwidths (or on [lo, hi] when given).
KdeCurve kde(std::span<const double> samples, std::optional<double> bandwidth = std::nullopt,
             std::size_t grid_size = 512,
             std::optional<std::array<double, 2>> range = std::nullopt);

// KDE of integer-valued samples given as counts per value, evaluated on an
// arbitrary grid; kernel tails beyond 8 bandwidths are dropped.
std::vector<double> kde_counts(std::span<const std::size_t> counts, double bandwidth,
                               std::span<const double> grid);

// ---- distribution shift ----

struct ShiftMetrics {
  double mean_shift = 0.0;      // mean(after) - mean(before)
  double variance_ratio = 1.0;  // var(after) / var(before), population variances
  double ks = 0.0;              // two-sample Kolmogorov-Smirnov statistic

  nlohmann::json to_json() const;
};

ShiftMetrics shift_metrics(std::span<const double> before, std::span<const double> after);
double ks_statistic(std::span<const double> a, std::span<const double> b);
double mean(std::span<const double> x);
double variance(std::span<const double> x);  // population
// Linear-interpolation percentile, q in [0, 100].
double percentile(std::span<const double> x, double q);

// ---- t-SNE ----

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch = 250;
};

struct Projection2D {
  std::vector<std::array<double, 2>> points;
  double kl = 0.0;               // KL(P || Q) after the last iteration
  std::vector<double> kl_curve;  // KL(P || Q) after each iteration
  std::size_t iterations = 0;
  std::uint64_t seed = 0;

  // "x,y,label" rows; labels align with points.
  std::string csv(std::span<const std::string> labels) const;
};

// Conditional affinities of one point with sigma searched so that their
// perplexity matches the target; returns the achieved perplexity.
double conditional_affinities(std::span<const double> sq_distances, std::size_t self,
                              double target_perplexity, std::span<double> out);

// Exact O(N^2) t-SNE. Needs N >= 3 * perplexity and d >= 2.
Projection2D tsne(const std::vector<std::vector<float>>& embeddings, const TsneOptions& options = {});

// ---- cluster scores ----

// Chance-normalized disagreement of the 5 nearest neighbours:
// (1 - a) / (1 - c), clamped to [0, 1], where a is the mean fraction of
// same-label neighbours and c the same fraction for random pairs.
double cluster_overlap(std::span<const std::array<double, 2>> points,
                       std::span<const int> labels, std::size_t k = 5);

// Share of points closer to their own label's centroid than to any other.
double nearest_centroid_purity(std::span<const std::array<double, 2>> points,
                               std::span<const int> labels);

// ---- token-ID density ----

struct TokenPeak {
  corpus::TokenId id = 0;
  std::string token;
  double density = 0.0;        // in the class being reported
  double other_density = 0.0;  // in the comparison class
};

struct TokenDensityReport {
  KdeCurve synth;
  KdeCurve nonsynth;
  std::vector<std::size_t> synth_counts;  // histogram per token id
  std::vector<std::size_t> nonsynth_counts;
  std::vector<TokenPeak> synth_peaks;     // SynthQA over NonSynth
  std::vector<TokenPeak> nonsynth_peaks;  // NonSynth over SynthQA

  std::string histogram_csv() const;  // "id,synth_count,nonsynth_count"
};

// A peak is an id where the class curve has a local maximum, exceeds the
// other class by `ratio` and sits at or above the uniform level 1/V.
std::vector<TokenPeak> find_peaks(const std::vector<double>& density,
                                  const std::vector<double>& other,
                                  const corpus::Vocabulary& vocab, double ratio);

// Densities of word token ids (specials excluded) per class, evaluated at
// every id. Bandwidth is in id units.
TokenDensityReport token_id_density(std::span<const corpus::TaggedSequence> data,
                                    const corpus::Vocabulary& vocab, double bandwidth = 1.0,
                                    double ratio = 3.0);

// ---- perplexity distributions ----

struct PerplexityDistribution {
  std::vector<double> samples;  // raw, one per document
  std::vector<double> clipped;  // capped at the 99.5th percentile
  double clip_value = 0.0;
  bool degenerate = false;      // zero spread; curve uses a nominal bandwidth
  KdeCurve curve;
};

// Per-document perplexity over the first max_context tokens.
std::vector<double> perplexities(const model::ModelParameters& params,
                                 std::span<const corpus::TaggedSequence> data);

PerplexityDistribution perplexity_distribution(const model::ModelParameters& params,
                                               std::span<const corpus::TaggedSequence> data,
                                               std::optional<double> bandwidth = std::nullopt);
PerplexityDistribution distribution_from_samples(std::vector<double> samples,
                                                 std::optional<double> bandwidth = std::nullopt);

// Mean-pooled last hidden states, one row per document.
std::vector<std::vector<float>> document_embeddings(const model::ModelParameters& params,
                                                    std::span<const corpus::TaggedSequence> data);

}  // namespace ulrn::analysis
