#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inductlab/tensor.hpp"

namespace inductlab {

using TokenId = std::uint32_t;
using Tokens = std::vector<TokenId>;

enum class PositionalKind {
  kLearnedAdditive,  // a max_seq x d_model table stored in the checkpoint
  kOneHotChannel,    // exact analytic channels, see positional_channels()
};

enum class NormKind { kNone, kLayerNorm };

std::string to_string(PositionalKind kind);
std::string to_string(NormKind kind);
PositionalKind parse_positional_kind(const std::string& s);
NormKind parse_norm_kind(const std::string& s);

// Number of residual channels reserved by the one-hot-channel scheme: one
// per residue class of the position modulo `pos_modulus`, a linear ramp
// p / max_seq, and a start flag that is 1 only at position 0.
std::size_t positional_channels(std::size_t pos_modulus);

struct ModelConfig {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_model = 0;
  std::size_t d_head = 0;
  std::size_t d_mlp = 0;  // ignored when attention_only
  std::size_t vocab_size = 0;
  std::size_t max_seq = 0;
  PositionalKind positional_kind = PositionalKind::kLearnedAdditive;
  std::size_t pos_channel_offset = 0;  // one-hot-channel only
  std::size_t pos_modulus = 16;        // one-hot-channel only
  bool attention_only = true;
  NormKind norm_kind = NormKind::kNone;
  float norm_eps = 1e-5f;

  std::size_t total_heads() const { return n_layers * n_heads; }
  // Throws InvalidArgument on inconsistent hyperparameters.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct HeadId {
  std::size_t layer = 0;
  std::size_t head = 0;

  friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

std::string to_string(const HeadId& id);

struct HeadWeights {
  Matrix query;   // d_model x d_head
  Matrix key;     // d_model x d_head
  Matrix value;   // d_model x d_head
  Matrix output;  // d_head x d_model

  friend bool operator==(const HeadWeights&, const HeadWeights&) = default;
};

struct LayerWeights {
  std::vector<HeadWeights> heads;
  // Present only with NormKind::kLayerNorm.
  std::vector<float> ln_attn_gain, ln_attn_bias;
  std::vector<float> ln_mlp_gain, ln_mlp_bias;
  // Present only when !attention_only.
  Matrix mlp_in;  // d_model x d_mlp
  std::vector<float> mlp_in_bias;
  Matrix mlp_out;  // d_mlp x d_model
  std::vector<float> mlp_out_bias;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct Checkpoint {
  ModelConfig config;
  Matrix token_embedding;     // vocab x d_model
  Matrix position_embedding;  // max_seq x d_model, learned-additive only
  Matrix unembedding;         // d_model x vocab
  std::vector<LayerWeights> layers;
  std::vector<float> final_gain, final_bias;  // layer-norm only

  // Zero-filled checkpoint with every tensor shaped for `config`.
  static Checkpoint allocate(const ModelConfig& config);

  // Shapes must match config exactly and every value must be finite.
  void validate() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// A named view over one weight tensor; vectors have a one-element shape.
struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<float> data;
};

// Every tensor the config calls for, in a fixed canonical order. Names:
//   tok_embedding, pos_embedding, unembedding, final_norm.{gain,bias},
//   layers.<l>.heads.<h>.{query,key,value,output},
//   layers.<l>.{ln_attn,ln_mlp}.{gain,bias}, layers.<l>.mlp.{in,in_bias,out,out_bias}
std::vector<TensorRef> named_tensors(Checkpoint& ckpt);

enum class AblationMode {
  kZero,  // pattern replaced by zeros; the head contributes nothing
  kMean,  // row i replaced by 1/(i+1) on positions 0..i
};

std::string to_string(AblationMode mode);
AblationMode parse_ablation_mode(const std::string& s);

// Per-head interventions applied to the post-softmax attention pattern,
// before value mixing. An empty plan is the identity.
struct InterventionPlan {
  std::map<HeadId, AblationMode> entries;

  bool empty() const { return entries.empty(); }
  void validate(const ModelConfig& config) const;
};

// Post-intervention attention patterns, one T x T lower-triangular matrix
// per head.
class AttentionTrace {
 public:
  AttentionTrace() = default;
  AttentionTrace(std::size_t n_layers, std::size_t n_heads, std::vector<Matrix> patterns);

  std::size_t length() const { return length_; }
  std::size_t n_layers() const { return n_layers_; }
  std::size_t n_heads() const { return n_heads_; }
  const Matrix& at(const HeadId& id) const;
  Matrix& at(const HeadId& id);

 private:
  std::size_t n_layers_ = 0;
  std::size_t n_heads_ = 0;
  std::size_t length_ = 0;
  std::vector<Matrix> patterns_;
};

// Incremental decoder: feeds one token at a time and caches keys and values.
// Every position is computed by the same kernels in the same order whether it
// arrives alone or as part of a prompt, so forward() and step-by-step decoding
// agree bit for bit.
class Decoder {
 public:
  Decoder(const Checkpoint& ckpt, InterventionPlan plan = {}, bool capture = false);

  // Appends `token`. When `want_logits` is false the unembedding is skipped
  // and the returned span is empty.
  std::span<const float> push(TokenId token, bool want_logits = true);

  std::size_t length() const { return length_; }
  const Checkpoint& checkpoint() const { return *ckpt_; }

  // Captured patterns for the positions pushed so far (requires capture).
  AttentionTrace trace() const;

 private:
  const Checkpoint* ckpt_;
  InterventionPlan plan_;
  bool capture_;
  std::size_t length_ = 0;
  float attn_scale_;

  // [layer * n_heads + head] -> position-major caches.
  std::vector<std::vector<float>> keys_, values_;
  std::vector<std::optional<AblationMode>> head_mode_;
  std::vector<std::vector<std::vector<float>>> pattern_rows_;

  std::vector<float> resid_, normed_, delta_, q_, k_, v_, z_, head_out_, scores_, logits_;
  std::vector<float> hidden_, mlp_out_;
};

struct ForwardResult {
  Matrix logits;  // T x vocab
  std::optional<AttentionTrace> trace;
};

ForwardResult forward(const Checkpoint& ckpt, std::span<const TokenId> tokens,
                      const InterventionPlan& plan = {}, bool capture = false);

// Softmax of the final-position logits.
std::vector<float> next_token_distribution(const Checkpoint& ckpt, std::span<const TokenId> tokens,
                                           const InterventionPlan& plan = {});

// Greedy decoding; ties go to the lowest token id.
Tokens greedy_generate(const Checkpoint& ckpt, std::span<const TokenId> prompt,
                       std::size_t n_tokens, const InterventionPlan& plan = {});

// Index of the first maximum, i.e. lowest id on ties.
TokenId argmax(std::span<const float> values);

}  // namespace inductlab
