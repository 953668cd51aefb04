#pragma once

#include "inductlab/model_factory.hpp"
#include "inductlab/transformer.hpp"

namespace inductlab::testing {

inline ModelConfig small_config(std::size_t layers = 2, std::size_t heads = 2, bool mlp = false,
                                NormKind norm = NormKind::kNone) {
  ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_model = 8;
  c.d_head = 4;
  c.d_mlp = mlp ? 16 : 0;
  c.vocab_size = 11;
  c.max_seq = 24;
  c.attention_only = !mlp;
  c.norm_kind = norm;
  return c;
}

inline Checkpoint small_model(std::uint64_t seed = 1, std::size_t layers = 2,
                              std::size_t heads = 2, bool mlp = false,
                              NormKind norm = NormKind::kNone) {
  return build_random_model(small_config(layers, heads, mlp, norm), seed);
}

// Small circuit for fast tests: 24-token vocabulary, 64 positions.
inline Checkpoint small_circuit(bool recency = true) {
  CircuitSpec spec;
  spec.vocab_size = 24;
  spec.max_seq = 64;
  spec.recency = recency;
  return build_induction_circuit(spec);
}

}  // namespace inductlab::testing
