#include "inductlab/transformer.hpp"

#include <algorithm>
#include <cmath>

namespace inductlab {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  require(m.rows() == rows && m.cols() == cols,
          "checkpoint tensor " + name + " has shape " + std::to_string(m.rows()) + "x" +
              std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
              std::to_string(cols));
}

void check_len(const std::vector<float>& v, std::size_t n, const std::string& name) {
  require(v.size() == n, "checkpoint tensor " + name + " has length " + std::to_string(v.size()) +
                             ", expected " + std::to_string(n));
}

bool finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

float dot(std::span<const float> a, std::span<const float> b) {
  float s = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void add_positional(const ModelConfig& cfg, const Checkpoint& ckpt, std::size_t pos,
                    std::span<float> resid) {
  if (cfg.positional_kind == PositionalKind::kLearnedAdditive) {
    auto row = ckpt.position_embedding.row(pos);
    for (std::size_t c = 0; c < resid.size(); ++c) resid[c] += row[c];
    return;
  }
  const std::size_t base = cfg.pos_channel_offset;
  resid[base + pos % cfg.pos_modulus] += 1.0f;
  resid[base + cfg.pos_modulus] += static_cast<float>(pos) / static_cast<float>(cfg.max_seq);
  if (pos == 0) resid[base + cfg.pos_modulus + 1] += 1.0f;
}

}  // namespace

std::string to_string(PositionalKind kind) {
  return kind == PositionalKind::kLearnedAdditive ? "learned-additive" : "one-hot-channel";
}

std::string to_string(NormKind kind) { return kind == NormKind::kNone ? "none" : "layer-norm"; }

PositionalKind parse_positional_kind(const std::string& s) {
  if (s == "learned-additive") return PositionalKind::kLearnedAdditive;
  if (s == "one-hot-channel") return PositionalKind::kOneHotChannel;
  throw InvalidArgument("unknown positional kind '" + s + "'");
}

NormKind parse_norm_kind(const std::string& s) {
  if (s == "none") return NormKind::kNone;
  if (s == "layer-norm") return NormKind::kLayerNorm;
  throw InvalidArgument("unknown norm kind '" + s + "'");
}

std::size_t positional_channels(std::size_t pos_modulus) { return pos_modulus + 2; }

void ModelConfig::validate() const {
  require(n_layers > 0 && n_heads > 0 && d_model > 0 && d_head > 0,
          "ModelConfig: layer, head and width counts must be positive");
  require(vocab_size > 0 && max_seq > 0, "ModelConfig: vocab_size and max_seq must be positive");
  require(attention_only || d_mlp > 0, "ModelConfig: d_mlp must be positive for MLP blocks");
  require(norm_eps > 0.0f, "ModelConfig: norm_eps must be positive");
  if (positional_kind == PositionalKind::kOneHotChannel) {
    require(pos_modulus > 0, "ModelConfig: pos_modulus must be positive");
    require(pos_channel_offset + positional_channels(pos_modulus) <= d_model,
            "ModelConfig: positional channels exceed d_model");
    require(n_heads * d_head <= d_model,
            "ModelConfig: n_heads * d_head must not exceed d_model for one-hot-channel models");
  } else {
    require(n_heads * d_head == d_model,
            "ModelConfig: n_heads * d_head must equal d_model for standard models");
  }
}

std::string to_string(const HeadId& id) {
  return "L" + std::to_string(id.layer) + "H" + std::to_string(id.head);
}

Checkpoint Checkpoint::allocate(const ModelConfig& config) {
  config.validate();
  Checkpoint c;
  c.config = config;
  c.token_embedding = Matrix(config.vocab_size, config.d_model);
  if (config.positional_kind == PositionalKind::kLearnedAdditive) {
    c.position_embedding = Matrix(config.max_seq, config.d_model);
  }
  c.unembedding = Matrix(config.d_model, config.vocab_size);
  const bool norm = config.norm_kind == NormKind::kLayerNorm;
  c.layers.resize(config.n_layers);
  for (auto& layer : c.layers) {
    layer.heads.resize(config.n_heads);
    for (auto& h : layer.heads) {
      h.query = Matrix(config.d_model, config.d_head);
      h.key = Matrix(config.d_model, config.d_head);
      h.value = Matrix(config.d_model, config.d_head);
      h.output = Matrix(config.d_head, config.d_model);
    }
    if (norm) {
      layer.ln_attn_gain.assign(config.d_model, 1.0f);
      layer.ln_attn_bias.assign(config.d_model, 0.0f);
      if (!config.attention_only) {
        layer.ln_mlp_gain.assign(config.d_model, 1.0f);
        layer.ln_mlp_bias.assign(config.d_model, 0.0f);
      }
    }
    if (!config.attention_only) {
      layer.mlp_in = Matrix(config.d_model, config.d_mlp);
      layer.mlp_in_bias.assign(config.d_mlp, 0.0f);
      layer.mlp_out = Matrix(config.d_mlp, config.d_model);
      layer.mlp_out_bias.assign(config.d_model, 0.0f);
    }
  }
  if (norm) {
    c.final_gain.assign(config.d_model, 1.0f);
    c.final_bias.assign(config.d_model, 0.0f);
  }
  return c;
}

void Checkpoint::validate() const {
  config.validate();
  const auto& cfg = config;
  const bool norm = cfg.norm_kind == NormKind::kLayerNorm;
  check_shape(token_embedding, cfg.vocab_size, cfg.d_model, "tok_embedding");
  if (cfg.positional_kind == PositionalKind::kLearnedAdditive) {
    check_shape(position_embedding, cfg.max_seq, cfg.d_model, "pos_embedding");
  } else {
    require(position_embedding.empty(), "one-hot-channel checkpoint must not carry pos_embedding");
  }
  check_shape(unembedding, cfg.d_model, cfg.vocab_size, "unembedding");
  require(layers.size() == cfg.n_layers, "checkpoint layer count does not match config");
  // named_tensors needs a mutable object; shapes are checked above and below.
  auto& self = const_cast<Checkpoint&>(*this);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& layer = layers[l];
    const std::string p = "layers." + std::to_string(l);
    require(layer.heads.size() == cfg.n_heads, p + ": head count does not match config");
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const auto& hw = layer.heads[h];
      const std::string hp = p + ".heads." + std::to_string(h);
      check_shape(hw.query, cfg.d_model, cfg.d_head, hp + ".query");
      check_shape(hw.key, cfg.d_model, cfg.d_head, hp + ".key");
      check_shape(hw.value, cfg.d_model, cfg.d_head, hp + ".value");
      check_shape(hw.output, cfg.d_head, cfg.d_model, hp + ".output");
    }
    check_len(layer.ln_attn_gain, norm ? cfg.d_model : 0, p + ".ln_attn.gain");
    check_len(layer.ln_attn_bias, norm ? cfg.d_model : 0, p + ".ln_attn.bias");
    const bool mlp = !cfg.attention_only;
    check_len(layer.ln_mlp_gain, norm && mlp ? cfg.d_model : 0, p + ".ln_mlp.gain");
    check_len(layer.ln_mlp_bias, norm && mlp ? cfg.d_model : 0, p + ".ln_mlp.bias");
    if (mlp) {
      check_shape(layer.mlp_in, cfg.d_model, cfg.d_mlp, p + ".mlp.in");
      check_shape(layer.mlp_out, cfg.d_mlp, cfg.d_model, p + ".mlp.out");
    } else {
      require(layer.mlp_in.empty() && layer.mlp_out.empty(),
              p + ": attention-only checkpoint carries MLP weights");
    }
    check_len(layer.mlp_in_bias, mlp ? cfg.d_mlp : 0, p + ".mlp.in_bias");
    check_len(layer.mlp_out_bias, mlp ? cfg.d_model : 0, p + ".mlp.out_bias");
  }
  check_len(final_gain, norm ? cfg.d_model : 0, "final_norm.gain");
  check_len(final_bias, norm ? cfg.d_model : 0, "final_norm.bias");
  for (const auto& t : named_tensors(self)) {
    require(finite(t.data), "checkpoint tensor " + t.name + " contains non-finite values");
  }
}

std::vector<TensorRef> named_tensors(Checkpoint& c) {
  std::vector<TensorRef> out;
  auto add_m = [&](std::string name, Matrix& m) {
    out.push_back({std::move(name), {m.rows(), m.cols()}, m.values()});
  };
  auto add_v = [&](std::string name, std::vector<float>& v) {
    out.push_back({std::move(name), {v.size()}, v});
  };
  const auto& cfg = c.config;
  const bool norm = cfg.norm_kind == NormKind::kLayerNorm;
  add_m("tok_embedding", c.token_embedding);
  if (cfg.positional_kind == PositionalKind::kLearnedAdditive) {
    add_m("pos_embedding", c.position_embedding);
  }
  add_m("unembedding", c.unembedding);
  if (norm) {
    add_v("final_norm.gain", c.final_gain);
    add_v("final_norm.bias", c.final_bias);
  }
  for (std::size_t l = 0; l < c.layers.size(); ++l) {
    auto& layer = c.layers[l];
    const std::string p = "layers." + std::to_string(l);
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      auto& hw = layer.heads[h];
      const std::string hp = p + ".heads." + std::to_string(h);
      add_m(hp + ".query", hw.query);
      add_m(hp + ".key", hw.key);
      add_m(hp + ".value", hw.value);
      add_m(hp + ".output", hw.output);
    }
    if (norm) {
      add_v(p + ".ln_attn.gain", layer.ln_attn_gain);
      add_v(p + ".ln_attn.bias", layer.ln_attn_bias);
    }
    if (!cfg.attention_only) {
      if (norm) {
        add_v(p + ".ln_mlp.gain", layer.ln_mlp_gain);
        add_v(p + ".ln_mlp.bias", layer.ln_mlp_bias);
      }
      add_m(p + ".mlp.in", layer.mlp_in);
      add_v(p + ".mlp.in_bias", layer.mlp_in_bias);
      add_m(p + ".mlp.out", layer.mlp_out);
      add_v(p + ".mlp.out_bias", layer.mlp_out_bias);
    }
  }
  return out;
}

std::string to_string(AblationMode mode) { return mode == AblationMode::kZero ? "zero" : "mean"; }

AblationMode parse_ablation_mode(const std::string& s) {
  if (s == "zero") return AblationMode::kZero;
  if (s == "mean") return AblationMode::kMean;
  throw InvalidArgument("unknown ablation mode '" + s + "'");
}

void InterventionPlan::validate(const ModelConfig& config) const {
  for (const auto& [id, mode] : entries) {
    require(id.layer < config.n_layers && id.head < config.n_heads,
            "intervention targets out-of-range head " + to_string(id));
  }
}

AttentionTrace::AttentionTrace(std::size_t n_layers, std::size_t n_heads,
                               std::vector<Matrix> patterns)
    : n_layers_(n_layers), n_heads_(n_heads), patterns_(std::move(patterns)) {
  require(patterns_.size() == n_layers * n_heads, "AttentionTrace: wrong number of patterns");
  length_ = patterns_.empty() ? 0 : patterns_.front().rows();
  for (const auto& p : patterns_) {
    require(p.rows() == length_ && p.cols() == length_, "AttentionTrace: patterns must be T x T");
  }
}

const Matrix& AttentionTrace::at(const HeadId& id) const {
  require(id.layer < n_layers_ && id.head < n_heads_, "AttentionTrace: head out of range");
  return patterns_[id.layer * n_heads_ + id.head];
}

Matrix& AttentionTrace::at(const HeadId& id) {
  require(id.layer < n_layers_ && id.head < n_heads_, "AttentionTrace: head out of range");
  return patterns_[id.layer * n_heads_ + id.head];
}

Decoder::Decoder(const Checkpoint& ckpt, InterventionPlan plan, bool capture)
    : ckpt_(&ckpt), plan_(std::move(plan)), capture_(capture) {
  const auto& cfg = ckpt.config;
  plan_.validate(cfg);
  attn_scale_ = 1.0f / std::sqrt(static_cast<float>(cfg.d_head));
  const std::size_t n = cfg.total_heads();
  keys_.resize(n);
  values_.resize(n);
  head_mode_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    keys_[i].reserve(cfg.max_seq * cfg.d_head);
    values_[i].reserve(cfg.max_seq * cfg.d_head);
  }
  for (const auto& [id, mode] : plan_.entries) head_mode_[id.layer * cfg.n_heads + id.head] = mode;
  if (capture_) pattern_rows_.resize(n);
  resid_.resize(cfg.d_model);
  normed_.resize(cfg.d_model);
  delta_.resize(cfg.d_model);
  head_out_.resize(cfg.d_model);
  q_.resize(cfg.d_head);
  k_.resize(cfg.d_head);
  v_.resize(cfg.d_head);
  z_.resize(cfg.d_head);
  scores_.resize(cfg.max_seq);
  logits_.resize(cfg.vocab_size);
  if (!cfg.attention_only) {
    hidden_.resize(cfg.d_mlp);
    mlp_out_.resize(cfg.d_model);
  }
}

std::span<const float> Decoder::push(TokenId token, bool want_logits) {
  const auto& cfg = ckpt_->config;
  if (token >= cfg.vocab_size) {
    throw InvalidArgument("token id " + std::to_string(token) + " out of range for vocab " +
                          std::to_string(cfg.vocab_size));
  }
  if (length_ >= cfg.max_seq) {
    throw InvalidArgument("sequence exceeds max_seq " + std::to_string(cfg.max_seq));
  }
  const std::size_t pos = length_;
  const bool norm = cfg.norm_kind == NormKind::kLayerNorm;

  auto emb = ckpt_->token_embedding.row(token);
  std::copy(emb.begin(), emb.end(), resid_.begin());
  add_positional(cfg, *ckpt_, pos, resid_);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& layer = ckpt_->layers[l];
    if (norm) {
      normed_ = layer_norm(resid_, layer.ln_attn_gain, layer.ln_attn_bias, cfg.norm_eps);
    } else {
      std::copy(resid_.begin(), resid_.end(), normed_.begin());
    }
    std::fill(delta_.begin(), delta_.end(), 0.0f);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t idx = l * cfg.n_heads + h;
      const auto& hw = layer.heads[h];
      vecmat(normed_, hw.query, q_);
      vecmat(normed_, hw.key, k_);
      vecmat(normed_, hw.value, v_);
      auto& kc = keys_[idx];
      auto& vc = values_[idx];
      kc.insert(kc.end(), k_.begin(), k_.end());
      vc.insert(vc.end(), v_.begin(), v_.end());

      const std::size_t n_keys = pos + 1;
      std::span<float> pattern(scores_.data(), n_keys);
      const auto& mode = head_mode_[idx];
      if (!mode) {
        for (std::size_t j = 0; j < n_keys; ++j) {
          pattern[j] = dot(q_, std::span<const float>(kc.data() + j * cfg.d_head, cfg.d_head)) *
                       attn_scale_;
        }
        softmax_inplace(pattern);
      } else if (*mode == AblationMode::kZero) {
        std::fill(pattern.begin(), pattern.end(), 0.0f);
      } else {
        std::fill(pattern.begin(), pattern.end(), 1.0f / static_cast<float>(n_keys));
      }
      if (capture_) pattern_rows_[idx].emplace_back(pattern.begin(), pattern.end());

      std::fill(z_.begin(), z_.end(), 0.0f);
      for (std::size_t j = 0; j < n_keys; ++j) {
        const float w = pattern[j];
        if (w == 0.0f) continue;
        const float* vj = vc.data() + j * cfg.d_head;
        for (std::size_t d = 0; d < cfg.d_head; ++d) z_[d] += w * vj[d];
      }
      vecmat(z_, hw.output, head_out_);
      for (std::size_t c = 0; c < cfg.d_model; ++c) delta_[c] += head_out_[c];
    }
    for (std::size_t c = 0; c < cfg.d_model; ++c) resid_[c] += delta_[c];

    if (!cfg.attention_only) {
      if (norm) {
        normed_ = layer_norm(resid_, layer.ln_mlp_gain, layer.ln_mlp_bias, cfg.norm_eps);
      } else {
        std::copy(resid_.begin(), resid_.end(), normed_.begin());
      }
      vecmat(normed_, layer.mlp_in, hidden_);
      for (std::size_t u = 0; u < cfg.d_mlp; ++u) hidden_[u] = gelu(hidden_[u] + layer.mlp_in_bias[u]);
      vecmat(hidden_, layer.mlp_out, mlp_out_);
      for (std::size_t c = 0; c < cfg.d_model; ++c) resid_[c] += mlp_out_[c] + layer.mlp_out_bias[c];
    }
  }
  ++length_;
  if (!want_logits) return {};
  if (norm) {
    normed_ = layer_norm(resid_, ckpt_->final_gain, ckpt_->final_bias, cfg.norm_eps);
    vecmat(normed_, ckpt_->unembedding, logits_);
  } else {
    vecmat(resid_, ckpt_->unembedding, logits_);
  }
  return logits_;
}

AttentionTrace Decoder::trace() const {
  if (!capture_) throw InvalidArgument("Decoder::trace: capture was not enabled");
  const auto& cfg = ckpt_->config;
  std::vector<Matrix> patterns;
  patterns.reserve(pattern_rows_.size());
  for (const auto& rows : pattern_rows_) {
    Matrix m(length_, length_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    patterns.push_back(std::move(m));
  }
  return AttentionTrace(cfg.n_layers, cfg.n_heads, std::move(patterns));
}

ForwardResult forward(const Checkpoint& ckpt, std::span<const TokenId> tokens,
                      const InterventionPlan& plan, bool capture) {
  if (tokens.empty()) throw InvalidArgument("forward: empty prompt");
  if (tokens.size() > ckpt.config.max_seq) {
    throw InvalidArgument("prompt length " + std::to_string(tokens.size()) + " exceeds max_seq " +
                          std::to_string(ckpt.config.max_seq));
  }
  Decoder dec(ckpt, plan, capture);
  ForwardResult result;
  result.logits = Matrix(tokens.size(), ckpt.config.vocab_size);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto logits = dec.push(tokens[t]);
    std::copy(logits.begin(), logits.end(), result.logits.row(t).begin());
  }
  if (capture) result.trace = dec.trace();
  return result;
}

std::vector<float> next_token_distribution(const Checkpoint& ckpt, std::span<const TokenId> tokens,
                                           const InterventionPlan& plan) {
  if (tokens.empty()) throw InvalidArgument("next_token_distribution: empty prompt");
  if (tokens.size() > ckpt.config.max_seq) {
    throw InvalidArgument("prompt length " + std::to_string(tokens.size()) + " exceeds max_seq " +
                          std::to_string(ckpt.config.max_seq));
  }
  Decoder dec(ckpt, plan);
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) dec.push(tokens[t], false);
  auto logits = dec.push(tokens.back());
  std::vector<float> probs(logits.begin(), logits.end());
  softmax_inplace(probs);
  return probs;
}

TokenId argmax(std::span<const float> values) {
  if (values.empty()) throw InvalidArgument("argmax: empty input");
  return static_cast<TokenId>(std::max_element(values.begin(), values.end()) - values.begin());
}

Tokens greedy_generate(const Checkpoint& ckpt, std::span<const TokenId> prompt,
                       std::size_t n_tokens, const InterventionPlan& plan) {
  if (prompt.empty()) throw InvalidArgument("greedy_generate: empty prompt");
  if (prompt.size() + n_tokens > ckpt.config.max_seq) {
    throw InvalidArgument("greedy_generate: prompt + continuation exceeds max_seq");
  }
  Tokens out;
  if (n_tokens == 0) return out;
  Decoder dec(ckpt, plan);
  for (std::size_t t = 0; t + 1 < prompt.size(); ++t) dec.push(prompt[t], false);
  auto logits = dec.push(prompt.back());
  for (std::size_t n = 0; n < n_tokens; ++n) {
    const TokenId next = argmax(logits);
    out.push_back(next);
    if (n + 1 < n_tokens) logits = dec.push(next);
  }
  return out;
}

}  // namespace inductlab
