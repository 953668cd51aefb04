#include "inductlab/ablation.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "inductlab/report.hpp"
#include "inductlab/rng.hpp"

namespace inductlab {

namespace {

std::size_t half_boundary(std::size_t n_layers) { return (n_layers + 1) / 2; }

std::vector<HeadId> eligible(const ScoreMap& scores, const SelectionPolicy& policy) {
  auto ranked = rank_heads(scores);
  using Kind = SelectionPolicy::Kind;
  switch (policy.kind) {
    case Kind::kTopK:
      return ranked;
    case Kind::kRandomExcludingTop:
      if (policy.exclude_top >= ranked.size()) {
        throw InvalidArgument("RandomExcludingTop: m=" + std::to_string(policy.exclude_top) +
                              " must be below the head count " + std::to_string(ranked.size()));
      }
      ranked.erase(ranked.begin(), ranked.begin() + static_cast<long>(policy.exclude_top));
      return ranked;
    case Kind::kTopHalfLayersTopK:
    case Kind::kBottomHalfLayersTopK: {
      const std::size_t boundary = half_boundary(scores.n_layers);
      const bool top = policy.kind == Kind::kTopHalfLayersTopK;
      std::erase_if(ranked, [&](const HeadId& id) { return top != (id.layer >= boundary); });
      return ranked;
    }
  }
  return ranked;
}

}  // namespace

std::string SelectionPolicy::name() const {
  switch (kind) {
    case Kind::kTopK:
      return "topk";
    case Kind::kRandomExcludingTop:
      return "random-excluding-top";
    case Kind::kTopHalfLayersTopK:
      return "top-half-topk";
    case Kind::kBottomHalfLayersTopK:
      return "bottom-half-topk";
  }
  return "unknown";
}

SelectionPolicy parse_policy(const std::string& name, std::size_t exclude_top) {
  if (name == "topk") return SelectionPolicy::top_k();
  if (name == "random-excluding-top") return SelectionPolicy::random_excluding_top(exclude_top);
  if (name == "top-half-topk") return SelectionPolicy::top_half_layers();
  if (name == "bottom-half-topk") return SelectionPolicy::bottom_half_layers();
  throw InvalidArgument("unknown selection policy '" + name + "'");
}

std::size_t default_exclude_top(std::size_t total_heads) { return (3 * total_heads + 9) / 10; }

std::vector<HeadId> rank_heads(const ScoreMap& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.scores[a] > scores.scores[b];
  });
  std::vector<HeadId> out;
  out.reserve(order.size());
  for (std::size_t flat : order) out.push_back(scores.head(flat));
  return out;
}

std::size_t eligible_pool_size(const ScoreMap& scores, const SelectionPolicy& policy) {
  return eligible(scores, policy).size();
}

std::vector<HeadId> select_heads(const ScoreMap& scores, const SelectionPolicy& policy,
                                 std::size_t k, std::uint64_t seed) {
  const auto pool = eligible(scores, policy);
  if (k > pool.size()) {
    throw InvalidArgument("select_heads: k=" + std::to_string(k) + " exceeds eligible pool of " +
                          std::to_string(pool.size()) + " heads for policy " + policy.name());
  }
  if (policy.kind != SelectionPolicy::Kind::kRandomExcludingTop) {
    return {pool.begin(), pool.begin() + static_cast<long>(k)};
  }
  Rng rng(derive_seed(seed, streams::kHeadSelection, 0));
  const auto picks = rng.sample_without_replacement(static_cast<std::uint32_t>(pool.size()),
                                                    static_cast<std::uint32_t>(k));
  std::vector<HeadId> out;
  out.reserve(k);
  for (auto p : picks) out.push_back(pool[p]);
  return out;
}

std::vector<std::size_t> lag_sweep_ladder() {
  return {1, 5, 10, 20, 30, 40, 50, 80, 100, 150, 200, 250, 300};
}

std::vector<std::size_t> icl_sweep_ladder() { return {0, 1, 10, 25, 50, 100}; }

std::vector<std::size_t> scale_ladder(const std::vector<std::size_t>& ladder,
                                      std::size_t total_heads, std::size_t reference_heads) {
  if (reference_heads == 0) throw InvalidArgument("scale_ladder: reference_heads must be positive");
  std::set<std::size_t> out;
  for (std::size_t k : ladder) {
    if (k == 0) {
      out.insert(0);
      continue;
    }
    const std::size_t scaled = (2 * k * total_heads + reference_heads) / (2 * reference_heads);
    out.insert(std::min(std::max<std::size_t>(scaled, 1), total_heads));
  }
  return {out.begin(), out.end()};
}

InterventionPlan make_plan(const std::vector<HeadId>& heads, AblationMode mode,
                           const ModelConfig& config) {
  InterventionPlan plan;
  for (const auto& id : heads) {
    if (id.layer >= config.n_layers || id.head >= config.n_heads) {
      throw InvalidArgument("make_plan: head " + to_string(id) + " out of range");
    }
    if (!plan.entries.emplace(id, mode).second) {
      throw InvalidArgument("make_plan: duplicate head " + to_string(id));
    }
  }
  return plan;
}

SweepResult ablation_sweep(const Checkpoint& ckpt, const ScoreMap& scores,
                           const SelectionPolicy& policy, const std::vector<std::size_t>& ks,
                           AblationMode mode, const Probe& probe, std::uint64_t seed) {
  if (!std::is_sorted(ks.begin(), ks.end())) {
    throw InvalidArgument("ablation_sweep: ks must be ascending");
  }
  if (scores.n_layers != ckpt.config.n_layers || scores.n_heads != ckpt.config.n_heads) {
    throw InvalidArgument("ablation_sweep: score map does not match the checkpoint");
  }
  const std::size_t pool = eligible_pool_size(scores, policy);
  SweepResult result;
  for (std::size_t k : ks) {
    if (k > pool) {
      result.skipped.push_back(k);
      continue;
    }
    auto heads = select_heads(scores, policy, k, seed);
    if (!result.selections.empty()) {
      const auto& prev = result.selections.back();
      if (!std::equal(prev.begin(), prev.end(), heads.begin())) {
        throw std::logic_error("ablation_sweep: selections are not nested in k");
      }
    }
    const auto plan = make_plan(heads, mode, ckpt.config);
    for (auto& [metric, value] : probe(plan)) {
      result.rows.push_back({policy.name(), mode, k, seed, metric, value});
    }
    result.selections.push_back(std::move(heads));
  }
  return result;
}

void write_sweep_csv_header(std::ostream& out) { out << "policy,mode,k,seed,metric,value\n"; }

void write_sweep_rows(std::ostream& out, const std::vector<SweepRow>& rows) {
  for (const auto& r : rows) {
    out << r.policy << ',' << to_string(r.mode) << ',' << r.k << ',' << r.seed << ',' << r.metric
        << ',' << format_number(r.value) << '\n';
  }
}

}  // namespace inductlab
