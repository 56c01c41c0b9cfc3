#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ulrn/autodiff/tensor.hpp"
#include "ulrn/corpus/corpus.hpp"

namespace ulrn::model {

using corpus::TokenId;

enum class Activation { kSwiGLU, kGELU };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

// Decoder-only transformer shape. Defaults are the desk-scale reference size.
struct ModelConfig {
  std::size_t vocab_size = 4096;
  std::size_t hidden_size = 128;
  std::size_t ffn_size = 344;
  std::size_t n_heads = 4;
  std::size_t n_layers = 4;
  std::size_t max_context = 256;
  float rope_base = 10000.0f;
  Activation activation = Activation::kSwiGLU;
  float norm_eps = 1e-5f;

  std::size_t head_dim() const { return hidden_size / n_heads; }
  void validate() const;  // throws kConfig
  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::shared_ptr<std::vector<float>> values;
};

// One gradient buffer per parameter tensor, in ModelParameters order.
struct Gradients {
  std::vector<std::vector<float>> values;

  static Gradients zeros_like(const class ModelParameters& params);
  void add_scaled(const Gradients& other, float weight);
  double norm() const;  // global L2 norm, accumulated in double
};

// All weights of one model. Copies are deep: two ModelParameters never share
// storage.
class ModelParameters {
 public:
  ModelParameters() = default;
  ModelParameters(ModelConfig config, std::vector<NamedTensor> tensors);
  ModelParameters(const ModelParameters& other);
  ModelParameters& operator=(const ModelParameters& other);
  ModelParameters(ModelParameters&&) noexcept = default;
  ModelParameters& operator=(ModelParameters&&) noexcept = default;

  // normal(0, init_std) for matrices, ones for norm gains.
  static ModelParameters initialize(const ModelConfig& config, std::uint64_t seed,
                                    float init_std = 0.02f);

  const ModelConfig& config() const { return config_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  std::vector<NamedTensor>& mutable_tensors() { return tensors_; }
  const NamedTensor& tensor(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t parameter_count() const;
  std::uint32_t checksum() const;  // CRC32 over all payloads in order

  // Expected tensor names and shapes for a config, in storage order.
  static std::vector<std::pair<std::string, ad::Shape>> layout(const ModelConfig& config);

 private:
  ModelConfig config_;
  std::vector<NamedTensor> tensors_;
};

// Deep copy that can no longer change; verify() re-checks the checksum taken
// at freeze time.
class FrozenModel {
 public:
  explicit FrozenModel(const ModelParameters& params);

  const ModelParameters& params() const { return params_; }
  std::uint32_t checksum() const { return checksum_; }
  void verify() const;  // throws kIntegrity

 private:
  const ModelParameters params_;
  const std::uint32_t checksum_;
};

// Parameters bound into one autodiff graph, either as requires_grad leaves
// (trainable) or as constants. Leaves read the model storage in place.
class ModelGraph {
 public:
  ModelGraph(ad::Graph& graph, const ModelParameters& params, bool trainable);

  ad::Graph& graph() { return graph_; }
  const ModelConfig& config() const { return params_.config(); }

  // Final-norm hidden states [T, d].
  ad::Tensor hidden(std::span<const TokenId> ids);
  // Next-token logits [T, V]; row t scores the token at position t + 1.
  ad::Tensor logits(std::span<const TokenId> ids);
  ad::Tensor project(const ad::Tensor& hidden);

  // Gradient buffers after graph.backward(); zeros for untouched parameters.
  Gradients gradients() const;

 private:
  ad::Graph& graph_;
  const ModelParameters& params_;
  std::vector<ad::Tensor> bound_;
};

// Logits [B, T, V] for equal-length sequences.
ad::Tensor forward(ad::Graph& graph, const ModelParameters& params,
                   std::span<const corpus::TokenSequence> batch);

// Distribution of the token at 0-based index `position` given ids[0..position).
// Valid for 1 <= position <= tokens.size().
std::vector<float> next_token_probs(const ModelParameters& params,
                                    const corpus::TokenSequence& tokens,
                                    std::size_t position);

// log p(ids[i] | ids[<i]) for i = 1..n-1, with the log floored at log(1e-12).
std::vector<double> token_log_probs(const ModelParameters& params,
                                    std::span<const TokenId> ids);

// exp of the mean negative log-likelihood over positions 1..n-1 (BOS is never
// a target).
double sequence_perplexity(const ModelParameters& params, const corpus::TokenSequence& tokens);
double perplexity_from_log_probs(std::span<const double> log_probs);

// Final hidden state mean-pooled over non-PAD positions.
std::vector<float> last_hidden_embedding(const ModelParameters& params,
                                         const corpus::TokenSequence& tokens);

// First max_context ids of a sequence (the whole sequence when it fits).
std::span<const TokenId> context_window(const ModelConfig& config,
                                        const corpus::TokenSequence& tokens);

// Checkpoint: "ULRN1", tensor manifest, little-endian float32 payloads,
// trailing CRC32 of the payload bytes.
void save_checkpoint(const ModelParameters& params, const std::filesystem::path& path);
std::string serialize_checkpoint(const ModelParameters& params);
ModelParameters load_checkpoint(const std::filesystem::path& path);
// Also checks every tensor against `expected`; a mismatch names the tensor.
ModelParameters load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);
ModelParameters parse_checkpoint(std::string_view bytes);

}  // namespace ulrn::model
