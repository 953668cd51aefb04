#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "inductlab/ablation.hpp"
#include "test_support.hpp"

namespace inductlab {
namespace {

// Heads (0,0):0.9, (0,1):0.1, (1,0):0.5, (1,1):0.0 on a 2x2 model.
ScoreMap three_heads() {
  ScoreMap m(2, 2);
  m.scores = {0.9, 0.1, 0.5, 0.0};
  return m;
}

TEST(Rank, DescendingWithStableTies) {
  ScoreMap m(2, 2);
  m.scores = {0.5, 0.7, 0.5, 0.1};
  const auto r = rank_heads(m);
  EXPECT_EQ(r, (std::vector<HeadId>{{0, 1}, {0, 0}, {1, 0}, {1, 1}}));
}

TEST(Select, TopK) {
  EXPECT_EQ(select_heads(three_heads(), SelectionPolicy::top_k(), 2, 0),
            (std::vector<HeadId>{{0, 0}, {1, 0}}));
}

TEST(Select, RandomExcludingTopOnForcedSet) {
  ScoreMap m(2, 2);
  m.scores = {0.9, 0.1, 0.5, -1.0};  // (1,1) ranks last
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto picks = select_heads(m, SelectionPolicy::random_excluding_top(1), 3, seed);
    std::sort(picks.begin(), picks.end());
    EXPECT_EQ(picks, (std::vector<HeadId>{{0, 1}, {1, 0}, {1, 1}}));
  }
}

TEST(Select, RandomExcludingTopFrequencies) {
  ScoreMap m(3, 4);
  for (std::size_t i = 0; i < m.size(); ++i) m.scores[i] = static_cast<double>(i) / 12.0;
  const auto ranked = rank_heads(m);
  const std::set<HeadId> excluded(ranked.begin(), ranked.begin() + 4);
  std::map<HeadId, int> counts;
  constexpr int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    for (const auto& h : select_heads(m, SelectionPolicy::random_excluding_top(4), 2, s)) {
      EXPECT_EQ(excluded.count(h), 0u);
      ++counts[h];
    }
  }
  EXPECT_EQ(counts.size(), 8u);
  const double p = 2.0 / 8.0, expect = seeds * p, sigma = std::sqrt(seeds * p * (1 - p));
  for (const auto& [h, c] : counts) EXPECT_LE(std::abs(c - expect), 3 * sigma) << to_string(h);
}

TEST(Select, SelectionsAreNestedInK) {
  ScoreMap m(4, 4);
  for (std::size_t i = 0; i < m.size(); ++i) m.scores[i] = std::sin(static_cast<double>(i));
  for (const auto& policy : {SelectionPolicy::top_k(), SelectionPolicy::random_excluding_top(3),
                             SelectionPolicy::top_half_layers(), SelectionPolicy::bottom_half_layers()}) {
    const std::size_t pool = eligible_pool_size(m, policy);
    const auto full = select_heads(m, policy, pool, 7);
    for (std::size_t k = 0; k <= pool; ++k) {
      const auto part = select_heads(m, policy, k, 7);
      EXPECT_TRUE(std::equal(part.begin(), part.end(), full.begin())) << policy.name() << " k=" << k;
    }
  }
}

TEST(Select, LayerHalves) {
  ScoreMap m(3, 2);  // boundary ceil(3/2) = 2
  m.scores = {0.9, 0.8, 0.7, 0.6, 0.1, 0.2};
  EXPECT_EQ(select_heads(m, SelectionPolicy::top_half_layers(), 2, 0),
            (std::vector<HeadId>{{2, 1}, {2, 0}}));
  EXPECT_EQ(eligible_pool_size(m, SelectionPolicy::bottom_half_layers()), 4u);
  EXPECT_EQ(select_heads(m, SelectionPolicy::bottom_half_layers(), 1, 0),
            (std::vector<HeadId>{{0, 0}}));
}

TEST(Select, Errors) {
  EXPECT_THROW(select_heads(three_heads(), SelectionPolicy::top_k(), 5, 0), InvalidArgument);
  EXPECT_THROW(select_heads(three_heads(), SelectionPolicy::random_excluding_top(4), 0, 0),
               InvalidArgument);
  EXPECT_THROW(parse_policy("best", 0), InvalidArgument);
}

TEST(Policy, NamesRoundTrip) {
  for (const auto& p : {SelectionPolicy::top_k(), SelectionPolicy::random_excluding_top(2),
                        SelectionPolicy::top_half_layers(), SelectionPolicy::bottom_half_layers()}) {
    const auto q = parse_policy(p.name(), p.exclude_top);
    EXPECT_EQ(q.kind, p.kind);
    EXPECT_EQ(q.exclude_top, p.exclude_top);
  }
}

TEST(Policy, DefaultExclusionIsCeilThirtyPercent) {
  EXPECT_EQ(default_exclude_top(6), 2u);
  EXPECT_EQ(default_exclude_top(10), 3u);
  EXPECT_EQ(default_exclude_top(1024), 308u);
}

TEST(Ladder, ScalesToAvailableHeads) {
  EXPECT_EQ(scale_ladder(lag_sweep_ladder(), 1024), lag_sweep_ladder());
  EXPECT_EQ(scale_ladder(lag_sweep_ladder(), 6), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(scale_ladder(icl_sweep_ladder(), 6), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(scale_ladder(icl_sweep_ladder(), 64), (std::vector<std::size_t>{0, 1, 2, 3, 6}));
}

TEST(MakePlan, RejectsDuplicatesAndOutOfRange) {
  const ModelConfig c = testing::small_config();
  EXPECT_TRUE(make_plan({}, AblationMode::kZero, c).empty());
  EXPECT_EQ(make_plan({{0, 1}, {1, 0}}, AblationMode::kMean, c).entries.size(), 2u);
  EXPECT_THROW(make_plan({{0, 1}, {0, 1}}, AblationMode::kZero, c), InvalidArgument);
  EXPECT_THROW(make_plan({{0, 2}}, AblationMode::kZero, c), InvalidArgument);
  EXPECT_THROW(make_plan({{2, 0}}, AblationMode::kZero, c), InvalidArgument);
}

TEST(Sweep, KZeroReproducesUnablatedProbe) {
  const Checkpoint ck = testing::small_model(3);
  const Tokens prompt{1, 2, 3, 4, 5};
  const Probe probe = [&](const InterventionPlan& plan) {
    return Metrics{{"p0", next_token_distribution(ck, prompt, plan)[0]}};
  };
  const auto r = ablation_sweep(ck, three_heads(), SelectionPolicy::top_k(), {0, 1, 9},
                                AblationMode::kZero, probe, 0);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].value, probe(InterventionPlan{})[0].second);
  EXPECT_EQ(r.skipped, (std::vector<std::size_t>{9}));
  EXPECT_EQ(r.selections[1], (std::vector<HeadId>{{0, 0}}));
  EXPECT_THROW(ablation_sweep(ck, three_heads(), SelectionPolicy::top_k(), {2, 1},
                              AblationMode::kZero, probe, 0),
               InvalidArgument);
  EXPECT_THROW(ablation_sweep(ck, ScoreMap(3, 2), SelectionPolicy::top_k(), {1},
                              AblationMode::kZero, probe, 0),
               InvalidArgument);
}

TEST(Sweep, CsvRows) {
  std::ostringstream out;
  write_sweep_csv_header(out);
  write_sweep_rows(out, {{"topk", AblationMode::kMean, 3, 7, "p_lag1", 0.5}});
  EXPECT_EQ(out.str(), "policy,mode,k,seed,metric,value\ntopk,mean,3,7,p_lag1,0.5\n");
}

}  // namespace
}  // namespace inductlab
