#include "inductlab/model_factory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "inductlab/rng.hpp"

namespace inductlab {

namespace {

constexpr std::size_t kPosModulus = 16;
constexpr std::size_t kScratch = 4;

}  // namespace

void CircuitSpec::validate() const {
  if (vocab_size < 4) throw InvalidArgument("CircuitSpec: vocab_size must be at least 4");
  if (max_seq < 4) throw InvalidArgument("CircuitSpec: max_seq must be at least 4");
  if (!(beta > 0.0f) || !std::isfinite(beta)) {
    throw InvalidArgument("CircuitSpec: beta must be positive and finite");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("CircuitSpec: epsilon must be in (0,1)");
}

CircuitLayout CircuitLayout::for_spec(const CircuitSpec& spec) {
  CircuitLayout lay;
  lay.vocab = spec.vocab_size;
  lay.pos_modulus = kPosModulus;
  lay.pos_offset = spec.vocab_size;
  lay.prev_offset = lay.pos_offset + positional_channels(kPosModulus);
  lay.copy_offset = lay.prev_offset + spec.vocab_size;
  lay.scratch_offset = lay.copy_offset + spec.vocab_size;
  lay.d_head = std::max(spec.vocab_size + 1, kPosModulus + 1);
  lay.n_heads = 2 + spec.n_distractor_heads;
  lay.d_model = std::max(lay.scratch_offset + kScratch, lay.n_heads * lay.d_head);
  return lay;
}

Checkpoint build_induction_circuit(const CircuitSpec& spec) {
  spec.validate();
  const CircuitLayout lay = CircuitLayout::for_spec(spec);
  const std::size_t V = spec.vocab_size;
  const std::size_t K = lay.pos_modulus;
  const std::size_t ramp = lay.pos_offset + K;
  const std::size_t start = ramp + 1;
  const float S = static_cast<float>(spec.max_seq);
  const float beta = spec.beta;

  // Layer 0: residue match gain and per-position recency.
  const float prev_recency = beta / static_cast<float>(K);
  const float residue_gain = beta + prev_recency;
  // Layer 1: recency per position; the match gain dominates the whole ramp
  // even when only one of the two previous-token heads is intact.
  const float ind_recency = spec.recency ? beta / 8.0f : 0.0f;
  const float match_gain = 2.0f * (ind_recency * S + beta);
  const float start_penalty = match_gain;

  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = lay.n_heads;
  cfg.d_model = lay.d_model;
  cfg.d_head = lay.d_head;
  cfg.vocab_size = V;
  cfg.max_seq = spec.max_seq;
  cfg.positional_kind = PositionalKind::kOneHotChannel;
  cfg.pos_channel_offset = lay.pos_offset;
  cfg.pos_modulus = K;
  cfg.attention_only = true;
  cfg.norm_kind = NormKind::kNone;

  Checkpoint ckpt = Checkpoint::allocate(cfg);
  // The engine divides scores by sqrt(d_head); fold that back into queries.
  const float qscale = std::sqrt(static_cast<float>(lay.d_head));

  for (std::size_t t = 0; t < V; ++t) ckpt.token_embedding(t, t) = 1.0f;

  for (std::size_t h = 0; h < 2; ++h) {
    auto& hw = ckpt.layers[0].heads[h];
    for (std::size_t r = 0; r < K; ++r) {
      hw.query(lay.pos_offset + r, (r + K - 1) % K) = residue_gain * qscale;
      hw.key(lay.pos_offset + r, r) = 1.0f;
    }
    // Every token embedding has exactly one unit entry, so summing the token
    // rows gives a constant-1 query coordinate.
    for (std::size_t t = 0; t < V; ++t) hw.query(t, K) = qscale;
    hw.key(ramp, K) = prev_recency * S;
    for (std::size_t t = 0; t < V; ++t) {
      hw.value(t, t) = 1.0f;
      hw.output(t, lay.prev_offset + t) = 0.5f;
    }
  }

  {
    auto& hw = ckpt.layers[1].heads[kCircuitInductionHead.head];
    for (std::size_t t = 0; t < V; ++t) {
      hw.query(t, t) = match_gain * qscale;
      hw.query(t, V) = qscale;
      hw.key(lay.prev_offset + t, t) = 1.0f;
      hw.value(t, t) = 1.0f;
      hw.output(t, lay.copy_offset + t) = 1.0f;
    }
    hw.key(ramp, V) = ind_recency * S;
    hw.key(start, V) = -start_penalty;
  }

  // Distractors: uniform attention, output parked in scratch channels.
  for (std::size_t l = 0; l < 2; ++l) {
    const std::size_t first = l == 0 ? 2 : 1;
    for (std::size_t h = first; h < lay.n_heads; ++h) {
      auto& hw = ckpt.layers[l].heads[h];
      for (std::size_t t = 0; t < V; ++t) hw.value(t, t % kScratch) = 1.0f;
      for (std::size_t d = 0; d < kScratch; ++d) hw.output(d, lay.scratch_offset + d) = 1.0f;
    }
  }

  for (std::size_t t = 0; t < V; ++t) ckpt.unembedding(lay.copy_offset + t, t) = beta;

  ckpt.validate();

  const double eps = measure_circuit_epsilon(ckpt);
  if (!(eps <= spec.epsilon)) {
    std::ostringstream msg;
    msg << "build_induction_circuit: beta=" << beta << " gives off-successor mass " << eps
        << " > epsilon " << spec.epsilon;
    throw InvalidArgument(msg.str());
  }
  if (!spec.recency) {
    const double mass = measure_unmatched_max_mass(ckpt);
    if (mass > 2.0 / static_cast<double>(V)) {
      std::ostringstream msg;
      msg << "build_induction_circuit: unmatched prompt peaks at " << mass << " > 2/vocab";
      throw InvalidArgument(msg.str());
    }
  }
  return ckpt;
}

double measure_circuit_epsilon(const Checkpoint& ckpt) {
  const std::size_t V = ckpt.config.vocab_size;
  const std::size_t S = ckpt.config.max_seq;
  double worst = 0.0;
  // The cue token 0 occurs at `p` and again at the end; every other position
  // cycles through ids 1..V-1, so the earlier occurrence is unique.
  for (std::size_t p : {std::size_t{0}, S / 2 - 1, S - 2}) {
    Tokens prompt(S);
    std::size_t next = 0;
    for (std::size_t i = 0; i < S; ++i) {
      if (i == p || i == S - 1) {
        prompt[i] = 0;
      } else {
        prompt[i] = static_cast<TokenId>(1 + next % (V - 1));
        ++next;
      }
    }
    const auto probs = next_token_distribution(ckpt, prompt);
    worst = std::max(worst, 1.0 - static_cast<double>(probs[prompt[p + 1]]));
  }
  return worst;
}

double measure_unmatched_max_mass(const Checkpoint& ckpt) {
  const std::size_t V = ckpt.config.vocab_size;
  const std::size_t S = ckpt.config.max_seq;
  Tokens prompt(S);
  for (std::size_t i = 0; i + 1 < S; ++i) prompt[i] = static_cast<TokenId>(1 + i % (V - 1));
  prompt[S - 1] = 0;
  const auto probs = next_token_distribution(ckpt, prompt);
  return *std::max_element(probs.begin(), probs.end());
}

Checkpoint build_random_model(const ModelConfig& config, std::uint64_t seed) {
  Checkpoint ckpt = Checkpoint::allocate(config);
  Rng rng(derive_seed(seed, streams::kWeights, 0));
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  for (auto& ref : named_tensors(ckpt)) {
    const bool is_norm = ref.name.find("norm") != std::string::npos ||
                         ref.name.find("ln_") != std::string::npos;
    const bool is_bias = ref.name.find("bias") != std::string::npos;
    if (is_norm || is_bias) continue;
    for (float& w : ref.data) w = static_cast<float>(rng.normal() * scale);
  }
  return ckpt;
}

std::vector<Tokens> synth_repeated_batch(std::size_t vocab_size, std::size_t half_len,
                                         std::size_t batch, std::uint64_t seed, bool distinct) {
  if (vocab_size == 0 || half_len == 0) {
    throw InvalidArgument("synth_repeated_batch: vocab_size and half_len must be positive");
  }
  if (distinct && half_len > vocab_size) {
    throw InvalidArgument("synth_repeated_batch: half_len exceeds vocab_size with distinct tokens");
  }
  std::vector<Tokens> rows;
  rows.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Rng rng(derive_seed(seed, streams::kBatches, b));
    Tokens row(2 * half_len);
    if (distinct) {
      const auto picks = rng.sample_without_replacement(static_cast<std::uint32_t>(vocab_size),
                                                        static_cast<std::uint32_t>(half_len));
      std::copy(picks.begin(), picks.end(), row.begin());
    } else {
      for (std::size_t i = 0; i < half_len; ++i) {
        row[i] = static_cast<TokenId>(rng.uniform_index(vocab_size));
      }
    }
    std::copy_n(row.begin(), half_len, row.begin() + static_cast<long>(half_len));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace inductlab
