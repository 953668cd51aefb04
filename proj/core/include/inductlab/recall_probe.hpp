#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "inductlab/ablation.hpp"
#include "inductlab/transformer.hpp"

namespace inductlab {

// Repeated-token probe: a permutation of P pool tokens followed by a copy of
// the token at index r. The next-token probability of the token at position
// r + lag is read off for every lag in [-r, P-1-r]; lag 0 is the cue itself.
struct ProbeConfig {
  std::vector<TokenId> pool;
  std::size_t repeat_index = 64;
  std::size_t permutations = 200;
  std::uint64_t seed = 0;
  // Permutation indices [first_permutation, first_permutation + permutations)
  // are used, so one long run can be split into shorter ones.
  std::size_t first_permutation = 0;

  std::size_t pool_size() const { return pool.size(); }
  // Pool 0..P-1.
  static ProbeConfig with_pool(std::size_t pool_size, std::size_t repeat_index,
                               std::size_t permutations, std::uint64_t seed);
  void validate(const ModelConfig& model) const;
};

struct ProbePrompt {
  Tokens tokens;  // length P + 1
  TokenId cue = 0;
  // (token, lag) for each of the first P positions, in position order.
  std::vector<std::pair<TokenId, long>> lags;
};

ProbePrompt build_probe_prompt_from_order(const std::vector<TokenId>& order,
                                          std::size_t repeat_index);
// Permutation `perm_index` shuffles the pool with
// Rng(derive_seed(seed, streams::kProbePermutation, perm_index)).
ProbePrompt build_probe_prompt(const ProbeConfig& cfg, std::size_t perm_index);

struct LagCurve {
  long min_lag = 0;  // -r
  long max_lag = 0;  // P-1-r
  std::vector<double> mean;  // indexed by lag - min_lag
  std::vector<std::size_t> count;
  std::size_t pool_size = 0;
  std::size_t repeat_index = 0;
  std::size_t permutations = 0;
  std::size_t first_permutation = 0;
  std::uint64_t seed = 0;

  bool has(long lag) const { return lag >= min_lag && lag <= max_lag; }
  double at(long lag) const { return mean.at(static_cast<std::size_t>(lag - min_lag)); }
  std::size_t size() const { return mean.size(); }
};

// Averages raw full-vocabulary next-token probabilities over permutations.
// Permutations run on up to `workers` threads; their results are reduced in
// permutation order with compensated (Neumaier) summation in double, so the
// curve does not depend on the worker count.
LagCurve lag_curve(const Checkpoint& ckpt, const ProbeConfig& cfg, const InterventionPlan& plan = {},
                   std::size_t workers = 1);

// Builds a curve from per-permutation probability rows (P values each, in
// position order). lag_curve is this reduction applied to model outputs.
LagCurve reduce_lag_rows(const std::vector<std::vector<float>>& rows, std::size_t repeat_index);

struct CurveStats {
  std::optional<double> p_lag1;
  std::optional<double> p_lag0;
  double baseline = 0.0;  // median over lags with |lag| >= baseline_window
  long peak_lag = 0;
  std::optional<double> recency_index;  // mean of the 10 largest lags / baseline
  long baseline_window = 10;
  bool window_shrunk = false;
  std::size_t recency_lags = 0;
};

// Peak ties go to the smallest |lag|, then to the positive side. When no lag
// reaches |lag| >= 10 the window shrinks until one does and window_shrunk is
// set. recency_index is empty when the baseline is zero.
CurveStats curve_stats(const LagCurve& curve);

// p_lag1, p_lag0, baseline, peak_lag, recency_index; absent values are NaN.
Metrics lag_metrics(const CurveStats& stats);
// Sweep probe: lag_curve under the plan, reduced by lag_metrics.
Probe make_lag_probe(const Checkpoint& ckpt, const ProbeConfig& cfg, std::size_t workers = 1);

void write_curve_csv(std::ostream& out, const LagCurve& curve);
std::string stats_to_json(const CurveStats& stats);

}  // namespace inductlab
