#include <cmath>

#include "ulrn/analysis/analysis.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/parallel.hpp"

namespace ulrn::analysis {

std::vector<double> perplexities(const model::ModelParameters& params,
                                 std::span<const corpus::TaggedSequence> data) {
  require(!data.empty(), ErrorKind::kContract, "perplexity of an empty corpus");
  std::vector<double> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const auto ids = model::context_window(params.config(), data[i].tokens);
    out[i] = model::perplexity_from_log_probs(model::token_log_probs(params, ids));
  });
  return out;
}

PerplexityDistribution distribution_from_samples(std::vector<double> samples,
                                                 std::optional<double> bandwidth) {
  require(!samples.empty(), ErrorKind::kContract, "perplexity distribution of no documents");
  PerplexityDistribution d;
  d.clip_value = percentile(samples, 99.5);
  d.clipped = samples;
  for (double& v : d.clipped) v = std::min(v, d.clip_value);
  d.samples = std::move(samples);
  d.degenerate = variance(d.clipped) == 0.0;
  if (!bandwidth && (d.degenerate || d.clipped.size() < 2)) {
    d.degenerate = true;
    bandwidth = std::max(1e-3 * std::abs(d.clipped[0]), 1e-3);
  }
  d.curve = kde(d.clipped, bandwidth);
  return d;
}

PerplexityDistribution perplexity_distribution(const model::ModelParameters& params,
                                               std::span<const corpus::TaggedSequence> data,
                                               std::optional<double> bandwidth) {
  return distribution_from_samples(perplexities(params, data), bandwidth);
}

std::vector<std::vector<float>> document_embeddings(const model::ModelParameters& params,
                                                    std::span<const corpus::TaggedSequence> data) {
  std::vector<std::vector<float>> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const auto ids = model::context_window(params.config(), data[i].tokens);
    out[i] = model::last_hidden_embedding(params, corpus::TokenSequence{{ids.begin(), ids.end()}});
  });
  return out;
}

}  // namespace ulrn::analysis
