#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "inductlab/transformer.hpp"

namespace inductlab {

// Per-head scores for one model, stored layer-major.
struct ScoreMap {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::vector<double> scores;
  std::size_t source_len = 0;  // N, the length of the unrepeated half
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  ScoreMap() = default;
  ScoreMap(std::size_t layers, std::size_t heads)
      : n_layers(layers), n_heads(heads), scores(layers * heads, 0.0) {}

  double& at(const HeadId& id) { return scores[id.layer * n_heads + id.head]; }
  double at(const HeadId& id) const { return scores[id.layer * n_heads + id.head]; }
  HeadId head(std::size_t flat) const { return {flat / n_heads, flat % n_heads}; }
  std::size_t size() const { return scores.size(); }
};

struct ScoreSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

// N distinct ids drawn uniformly from [0, vocab_size), followed by the same N
// ids again.
Tokens build_repeat_prompt(std::size_t source_len, std::size_t vocab_size, std::uint64_t seed);

// Mean attention from each position of the repeated copy to the position just
// after the earlier occurrence of its token. With zero-based positions, the
// rows are i = N .. 2N-2 and the attended column is i-N+1; for N = 4 that is
// a[4][1], a[5][2], a[6][3], averaged over N-1 = 3 rows.
ScoreMap induction_score(const AttentionTrace& trace, std::size_t source_len);

struct LagScore {
  ScoreMap map;
  std::size_t rows_used = 0;
  std::size_t rows_skipped = 0;
};

// Generalizes the induction score to column i-N+k over the same rows. Rows
// whose column falls outside 0..i are skipped and the mean is taken over the
// rest. k = 1 is the induction score and k = 0 targets the earlier occurrence
// of the current token itself (copying). Requires -N < k < N.
LagScore lag_k_score(const AttentionTrace& trace, std::size_t source_len, long k);

// Average of induction_score over `trials` prompts. Prompt t uses seed
// derive_seed(seed, streams::kScorerPrompt, t). Prompts run on up to
// `workers` threads; the average is taken in trial order.
ScoreMap score_all_heads(const Checkpoint& ckpt, std::size_t source_len, std::size_t trials,
                         std::uint64_t seed, std::size_t workers = 1);

ScoreSummary summarize(const ScoreMap& map);

// Elementwise a - b. Head sets and N must agree.
ScoreMap score_delta(const ScoreMap& a, const ScoreMap& b);

// CSV with header "layer,head,score", one row per head in layer-major order.
void write_score_csv(std::ostream& out, const ScoreMap& map);
// n_layers rows of n_heads comma-separated values.
void write_heatmap_csv(std::ostream& out, const ScoreMap& map);

}  // namespace inductlab
