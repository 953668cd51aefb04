#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "inductlab/induction_scorer.hpp"
#include "inductlab/transformer.hpp"

namespace inductlab {

struct SelectionPolicy {
  enum class Kind {
    kTopK,                // k highest-scoring heads overall
    kRandomExcludingTop,  // k uniform picks from heads outside the top `exclude_top`
    kTopHalfLayersTopK,   // top k among layers >= ceil(n_layers / 2)
    kBottomHalfLayersTopK,
  };

  Kind kind = Kind::kTopK;
  std::size_t exclude_top = 0;  // kRandomExcludingTop only

  static SelectionPolicy top_k() { return {Kind::kTopK, 0}; }
  static SelectionPolicy random_excluding_top(std::size_t m) {
    return {Kind::kRandomExcludingTop, m};
  }
  static SelectionPolicy top_half_layers() { return {Kind::kTopHalfLayersTopK, 0}; }
  static SelectionPolicy bottom_half_layers() { return {Kind::kBottomHalfLayersTopK, 0}; }

  std::string name() const;
};

SelectionPolicy parse_policy(const std::string& name, std::size_t exclude_top);

// ceil(30%) of the heads.
std::size_t default_exclude_top(std::size_t total_heads);

// All heads by descending score, ties by (layer, head) ascending.
std::vector<HeadId> rank_heads(const ScoreMap& scores);

// Random picks use Rng(derive_seed(seed, streams::kHeadSelection, 0)) and a
// partial Fisher-Yates over the eligible heads in rank order, so for a fixed
// seed the selection at k is a prefix of the selection at any larger k.
std::vector<HeadId> select_heads(const ScoreMap& scores, const SelectionPolicy& policy,
                                 std::size_t k, std::uint64_t seed);

// Number of heads a policy may draw from.
std::size_t eligible_pool_size(const ScoreMap& scores, const SelectionPolicy& policy);

// Ablation ladders for models with about a thousand heads.
inline constexpr std::size_t kReferenceHeadCount = 1024;
std::vector<std::size_t> lag_sweep_ladder();  // 1, 5, 10, 20, ..., 300
std::vector<std::size_t> icl_sweep_ladder();  // 0, 1, 10, 25, 50, 100

// Maps each k to round(k * total_heads / reference_heads), at least 1 for
// k >= 1 and at most total_heads. 0 stays 0. Result is ascending, no repeats.
std::vector<std::size_t> scale_ladder(const std::vector<std::size_t>& ladder,
                                      std::size_t total_heads,
                                      std::size_t reference_heads = kReferenceHeadCount);

InterventionPlan make_plan(const std::vector<HeadId>& heads, AblationMode mode,
                           const ModelConfig& config);

using Metrics = std::vector<std::pair<std::string, double>>;
using Probe = std::function<Metrics(const InterventionPlan&)>;

struct SweepRow {
  std::string policy;
  AblationMode mode = AblationMode::kZero;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::vector<HeadId>> selections;  // one per evaluated k
  std::vector<std::size_t> skipped;             // ks larger than the pool
};

// For each k (ascending): select heads, build the plan, run the probe and
// record its metrics. k larger than the eligible pool is skipped and listed.
SweepResult ablation_sweep(const Checkpoint& ckpt, const ScoreMap& scores,
                           const SelectionPolicy& policy, const std::vector<std::size_t>& ks,
                           AblationMode mode, const Probe& probe, std::uint64_t seed);

void write_sweep_csv_header(std::ostream& out);
void write_sweep_rows(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace inductlab
