#include "ulrn/model/transformer.hpp"

#include <cmath>
#include <random>

#include "ulrn/autodiff/ops.hpp"
#include "ulrn/corpus/vocabulary.hpp"
#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"

namespace ulrn::model {

std::string_view to_string(Activation a) {
  return a == Activation::kSwiGLU ? "swiglu" : "gelu";
}

Activation parse_activation(std::string_view name) {
  if (name == "swiglu") return Activation::kSwiGLU;
  if (name == "gelu") return Activation::kGELU;
  fail(ErrorKind::kConfig, "unknown activation '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  require(vocab_size >= corpus::kMinVocabularySize, ErrorKind::kConfig,
          "vocab_size must be at least " + std::to_string(corpus::kMinVocabularySize));
  require(hidden_size > 0 && ffn_size > 0 && n_heads > 0 && n_layers > 0, ErrorKind::kConfig,
          "model dimensions must be positive");
  require(hidden_size % n_heads == 0, ErrorKind::kConfig,
          "hidden_size " + std::to_string(hidden_size) + " not divisible by n_heads " +
              std::to_string(n_heads));
  require(head_dim() % 2 == 0, ErrorKind::kConfig, "rotary embedding needs an even head_dim");
  require(max_context >= 2, ErrorKind::kConfig, "max_context must be at least 2");
  require(rope_base > 0.0f && norm_eps > 0.0f, ErrorKind::kConfig,
          "rope_base and norm_eps must be positive");
}

Gradients Gradients::zeros_like(const ModelParameters& params) {
  Gradients g;
  for (const NamedTensor& t : params.tensors()) g.values.emplace_back(t.values->size(), 0.0f);
  return g;
}

void Gradients::add_scaled(const Gradients& other, float weight) {
  require(other.values.size() == values.size(), ErrorKind::kShape, "gradient sets differ in size");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& dst = values[i];
    const auto& src = other.values[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += weight * src[j];
  }
}

double Gradients::norm() const {
  double ss = 0.0;
  for (const auto& v : values)
    for (float x : v) ss += static_cast<double>(x) * x;
  return std::sqrt(ss);
}

ModelParameters::ModelParameters(ModelConfig config, std::vector<NamedTensor> tensors)
    : config_(config), tensors_(std::move(tensors)) {
  config_.validate();
  const auto expected = layout(config_);
  require(expected.size() == tensors_.size(), ErrorKind::kShape,
          "expected " + std::to_string(expected.size()) + " tensors, got " +
              std::to_string(tensors_.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    require(tensors_[i].name == expected[i].first, ErrorKind::kShape,
            "tensor " + std::to_string(i) + " should be '" + expected[i].first + "', got '" +
                tensors_[i].name + "'");
    require(tensors_[i].shape == expected[i].second &&
                tensors_[i].values->size() == ad::numel(expected[i].second),
            ErrorKind::kShape,
            "tensor '" + tensors_[i].name + "' has shape " + ad::shape_string(tensors_[i].shape) +
                ", expected " + ad::shape_string(expected[i].second));
  }
}

ModelParameters::ModelParameters(const ModelParameters& other) : config_(other.config_) {
  tensors_.reserve(other.tensors_.size());
  for (const NamedTensor& t : other.tensors_) {
    tensors_.push_back({t.name, t.shape, std::make_shared<std::vector<float>>(*t.values)});
  }
}

ModelParameters& ModelParameters::operator=(const ModelParameters& other) {
  if (this != &other) *this = ModelParameters(other);
  return *this;
}

std::vector<std::pair<std::string, ad::Shape>> ModelParameters::layout(const ModelConfig& c) {
  const std::size_t d = c.hidden_size, f = c.ffn_size, v = c.vocab_size;
  std::vector<std::pair<std::string, ad::Shape>> out;
  out.push_back({"tok_embedding", {v, d}});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "attn_norm", {d}});
    out.push_back({p + "wq", {d, d}});
    out.push_back({p + "wk", {d, d}});
    out.push_back({p + "wv", {d, d}});
    out.push_back({p + "wo", {d, d}});
    out.push_back({p + "ffn_norm", {d}});
    if (c.activation == Activation::kSwiGLU) out.push_back({p + "w_gate", {d, f}});
    out.push_back({p + "w_up", {d, f}});
    out.push_back({p + "w_down", {f, d}});
  }
  out.push_back({"final_norm", {d}});
  out.push_back({"output", {d, v}});
  return out;
}

ModelParameters ModelParameters::initialize(const ModelConfig& config, std::uint64_t seed,
                                            float init_std) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, init_std);
  std::vector<NamedTensor> tensors;
  for (auto& [name, shape] : layout(config)) {
    auto values = std::make_shared<std::vector<float>>(ad::numel(shape));
    if (shape.size() == 1) {
      std::fill(values->begin(), values->end(), 1.0f);
    } else {
      for (float& x : *values) x = normal(rng);
    }
    tensors.push_back({name, shape, std::move(values)});
  }
  return ModelParameters(config, std::move(tensors));
}

const NamedTensor& ModelParameters::tensor(std::string_view name) const {
  return tensors_[index_of(name)];
}

std::size_t ModelParameters::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  fail(ErrorKind::kIndex, "no parameter tensor named '" + std::string(name) + "'");
}

std::size_t ModelParameters::parameter_count() const {
  std::size_t n = 0;
  for (const NamedTensor& t : tensors_) n += t.values->size();
  return n;
}

std::uint32_t ModelParameters::checksum() const {
  std::uint32_t crc = 0;
  for (const NamedTensor& t : tensors_) crc = crc32(std::span<const float>(*t.values), crc);
  return crc;
}

FrozenModel::FrozenModel(const ModelParameters& params)
    : params_(params), checksum_(params_.checksum()) {}

void FrozenModel::verify() const {
  const std::uint32_t now = params_.checksum();
  require(now == checksum_, ErrorKind::kIntegrity,
          "frozen reference model changed (checksum " + std::to_string(checksum_) + " -> " +
              std::to_string(now) + ")");
}

ModelGraph::ModelGraph(ad::Graph& graph, const ModelParameters& params, bool trainable)
    : graph_(graph), params_(params) {
  bound_.reserve(params.tensors().size());
  for (const NamedTensor& t : params.tensors()) {
    bound_.push_back(trainable ? graph.parameter(t.shape, t.values)
                               : graph.constant(t.shape, t.values));
  }
}

ad::Tensor ModelGraph::hidden(std::span<const TokenId> ids) {
  const ModelConfig& c = params_.config();
  require(!ids.empty(), ErrorKind::kContract, "forward pass over an empty sequence");
  require(ids.size() <= c.max_context, ErrorKind::kLength,
          "sequence of " + std::to_string(ids.size()) + " tokens exceeds context " +
              std::to_string(c.max_context));
  std::size_t k = 0;
  ad::Tensor x = ad::embedding(bound_[k++], ids);
  const std::size_t hd = c.head_dim();
  const float attn_scale = 1.0f / std::sqrt(static_cast<float>(hd));
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const ad::Tensor& attn_norm = bound_[k++];
    const ad::Tensor& wq = bound_[k++];
    const ad::Tensor& wk = bound_[k++];
    const ad::Tensor& wv = bound_[k++];
    const ad::Tensor& wo = bound_[k++];
    const ad::Tensor& ffn_norm = bound_[k++];

    ad::Tensor h = ad::rms_norm(x, attn_norm, c.norm_eps);
    ad::Tensor q = ad::rope(ad::matmul(h, wq), c.n_heads, c.rope_base);
    ad::Tensor kk = ad::rope(ad::matmul(h, wk), c.n_heads, c.rope_base);
    ad::Tensor v = ad::matmul(h, wv);
    std::vector<ad::Tensor> heads;
    heads.reserve(c.n_heads);
    for (std::size_t head = 0; head < c.n_heads; ++head) {
      const std::size_t lo = head * hd, hi = lo + hd;
      ad::Tensor scores = ad::scale(
          ad::matmul(ad::slice_cols(q, lo, hi), ad::transpose(ad::slice_cols(kk, lo, hi))),
          attn_scale);
      heads.push_back(ad::matmul(ad::causal_softmax(scores), ad::slice_cols(v, lo, hi)));
    }
    x = ad::add(x, ad::matmul(ad::concat_cols(heads), wo));

    ad::Tensor h2 = ad::rms_norm(x, ffn_norm, c.norm_eps);
    ad::Tensor inner;
    if (c.activation == Activation::kSwiGLU) {
      const ad::Tensor& w_gate = bound_[k++];
      const ad::Tensor& w_up = bound_[k++];
      inner = ad::mul(ad::silu(ad::matmul(h2, w_gate)), ad::matmul(h2, w_up));
    } else {
      const ad::Tensor& w_up = bound_[k++];
      inner = ad::gelu(ad::matmul(h2, w_up));
    }
    const ad::Tensor& w_down = bound_[k++];
    x = ad::add(x, ad::matmul(inner, w_down));
  }
  return ad::rms_norm(x, bound_[k], c.norm_eps);
}

ad::Tensor ModelGraph::project(const ad::Tensor& hidden) {
  return ad::matmul(hidden, bound_.back());
}

ad::Tensor ModelGraph::logits(std::span<const TokenId> ids) { return project(hidden(ids)); }

Gradients ModelGraph::gradients() const {
  Gradients g;
  g.values.reserve(bound_.size());
  for (const ad::Tensor& t : bound_) g.values.push_back(t.grad());
  return g;
}

ad::Tensor forward(ad::Graph& graph, const ModelParameters& params,
                   std::span<const corpus::TokenSequence> batch) {
  require(!batch.empty(), ErrorKind::kContract, "forward over an empty batch");
  const std::size_t t = batch[0].size();
  ModelGraph model(graph, params, true);
  std::vector<ad::Tensor> rows;
  for (const auto& seq : batch) {
    require(seq.size() == t, ErrorKind::kShape, "batched sequences must share one length");
    rows.push_back(model.logits(seq.ids));
  }
  return ad::reshape(ad::concat_rows(rows), {batch.size(), t, params.config().vocab_size});
}

namespace {

// Double-precision log-softmax of one logit row evaluated at `target`,
// floored at log(kLogEpsilon).
double log_prob(std::span<const float> row, std::size_t target) {
  float mx = row[0];
  for (float z : row) mx = std::max(mx, z);
  double total = 0.0;
  for (float z : row) total += std::exp(static_cast<double>(z) - mx);
  const double lp = static_cast<double>(row[target]) - mx - std::log(total);
  return std::max(lp, std::log(static_cast<double>(ad::kLogEpsilon)));
}

}  // namespace

std::vector<float> next_token_probs(const ModelParameters& params,
                                    const corpus::TokenSequence& tokens, std::size_t position) {
  require(position >= 1 && position <= tokens.size(), ErrorKind::kIndex,
          "position " + std::to_string(position) + " outside [1, " +
              std::to_string(tokens.size()) + "]");
  ad::Graph g;
  ModelGraph model(g, params, false);
  ad::Tensor logits =
      model.logits(std::span<const TokenId>(tokens.ids).first(position));
  const std::size_t v = params.config().vocab_size;
  auto row = logits.data().subspan((position - 1) * v, v);
  float mx = row[0];
  for (float z : row) mx = std::max(mx, z);
  std::vector<double> e(v);
  double total = 0.0;
  for (std::size_t i = 0; i < v; ++i) total += e[i] = std::exp(static_cast<double>(row[i]) - mx);
  std::vector<float> probs(v);
  for (std::size_t i = 0; i < v; ++i) probs[i] = static_cast<float>(e[i] / total);
  return probs;
}

std::vector<double> token_log_probs(const ModelParameters& params, std::span<const TokenId> ids) {
  require(ids.size() >= 2, ErrorKind::kContract,
          "need at least two tokens to score a prediction");
  ad::Graph g;
  ModelGraph model(g, params, false);
  ad::Tensor logits = model.logits(ids.first(ids.size() - 1));
  const std::size_t v = params.config().vocab_size;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      fail(ErrorKind::kVocabulary, "token id " + std::to_string(ids[i]) + " outside vocabulary");
    }
  }
  std::vector<double> out(ids.size() - 1);
  for (std::size_t i = 1; i < ids.size(); ++i) {
    out[i - 1] = log_prob(logits.data().subspan((i - 1) * v, v), static_cast<std::size_t>(ids[i]));
  }
  return out;
}

double perplexity_from_log_probs(std::span<const double> log_probs) {
  require(!log_probs.empty(), ErrorKind::kContract, "perplexity of zero predictions");
  double total = 0.0;
  for (double lp : log_probs) total += lp;
  return std::exp(-total / static_cast<double>(log_probs.size()));
}

double sequence_perplexity(const ModelParameters& params, const corpus::TokenSequence& tokens) {
  require(tokens.size() >= 2, ErrorKind::kContract,
          "perplexity needs a sequence of length >= 2");
  return perplexity_from_log_probs(token_log_probs(params, tokens.ids));
}

std::vector<float> last_hidden_embedding(const ModelParameters& params,
                                         const corpus::TokenSequence& tokens) {
  require(!tokens.ids.empty(), ErrorKind::kContract, "embedding of an empty sequence");
  ad::Graph g;
  ModelGraph model(g, params, false);
  ad::Tensor h = model.hidden(tokens.ids);
  const std::size_t d = params.config().hidden_size;
  std::vector<double> acc(d, 0.0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens.ids[t] == corpus::kPad) continue;
    ++count;
    for (std::size_t j = 0; j < d; ++j) acc[j] += h.data()[t * d + j];
  }
  require(count > 0, ErrorKind::kContract, "sequence consists only of padding");
  std::vector<float> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<float>(acc[j] / count);
  return out;
}

std::span<const TokenId> context_window(const ModelConfig& config,
                                        const corpus::TokenSequence& tokens) {
  std::span<const TokenId> ids(tokens.ids);
  return ids.first(std::min(ids.size(), config.max_context));
}

}  // namespace ulrn::model
