#pragma once

#include <cstdint>
#include <vector>

#include "inductlab/transformer.hpp"

namespace inductlab {

// Parameters of the handcrafted two-layer induction circuit.
//
// Layer 0 holds two identical previous-token heads. Each attends from
// position i to i-1 using the one-hot residue channels (i mod 16) plus a
// small recency ramp that breaks the aliasing between i-1 and i-1-16k, and
// writes half of the attended token's one-hot into a reserved "previous
// token" subspace. Layer 1 holds one induction head whose query is the
// current token and whose key is that previous-token subspace, so position
// i attends to every j with tokens[j-1] == tokens[i]. A recency ramp on the
// keys picks the latest such j when there are several, and position 0 is
// masked off with the start channel. The head copies tokens[j] into an
// output subspace read by the unembedding with gain beta. The remaining heads
// attend uniformly and write to scratch channels nothing reads.
//
// With recency on, a final token with no earlier occurrence makes the
// induction head fall back to the most recent positions (copying). With
// recency off, that case is diffuse and the output is near uniform on long
// prompts, but multiple earlier occurrences are averaged instead of resolved.
struct CircuitSpec {
  std::size_t vocab_size = 160;
  std::size_t max_seq = 336;
  float beta = 30.0f;
  std::size_t n_distractor_heads = 1;
  bool recency = true;
  // Largest tolerated off-successor probability mass, checked at build time.
  double epsilon = 1e-3;

  void validate() const;
};

// Where the circuit keeps things in the residual stream.
struct CircuitLayout {
  std::size_t vocab = 0;
  std::size_t pos_modulus = 16;
  std::size_t pos_offset = 0;
  std::size_t prev_offset = 0;
  std::size_t copy_offset = 0;
  std::size_t scratch_offset = 0;
  std::size_t d_model = 0;
  std::size_t d_head = 0;
  std::size_t n_heads = 0;

  static CircuitLayout for_spec(const CircuitSpec& spec);
};

// The layer-1 head that does the induction.
inline constexpr HeadId kCircuitInductionHead{1, 0};

// Builds the circuit and measures its worst-case off-successor mass on
// probe prompts of length max_seq. Throws InvalidArgument, quoting the
// measured value, when that mass exceeds spec.epsilon.
Checkpoint build_induction_circuit(const CircuitSpec& spec);

// Largest off-successor probability mass over the build-time probe prompts.
double measure_circuit_epsilon(const Checkpoint& ckpt);

// Largest single-token probability after a length-max_seq prompt whose final
// token never occurred before.
double measure_unmatched_max_mass(const Checkpoint& ckpt);

// i.i.d. N(0, 1/d_model) weights; norm gains 1 and all biases 0.
Checkpoint build_random_model(const ModelConfig& config, std::uint64_t seed);

// Rows of the form [x x] with |x| = half_len. With `distinct` the first half
// has no repeated ids (requires half_len <= vocab_size).
std::vector<Tokens> synth_repeated_batch(std::size_t vocab_size, std::size_t half_len,
                                         std::size_t batch, std::uint64_t seed,
                                         bool distinct = true);

}  // namespace inductlab
