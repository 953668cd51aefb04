#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "inductlab/model_factory.hpp"
#include "inductlab/transformer.hpp"
#include "test_support.hpp"

namespace inductlab {
namespace {

using testing::small_config;
using testing::small_model;

const Tokens kPrompt{3, 1, 4, 1, 5, 9, 2, 6, 5, 3};

const Checkpoint& default_circuit() {
  static const Checkpoint c = build_induction_circuit(CircuitSpec{});
  return c;
}

TEST(ModelConfig, RejectsInconsistentShapes) {
  ModelConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.vocab_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config();
  c.n_heads = 3;  // 3 * 4 > 8
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config();
  c.attention_only = false;
  c.d_mlp = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Names, RoundTrip) {
  for (auto m : {AblationMode::kZero, AblationMode::kMean}) {
    EXPECT_EQ(parse_ablation_mode(to_string(m)), m);
  }
  for (auto k : {PositionalKind::kLearnedAdditive, PositionalKind::kOneHotChannel}) {
    EXPECT_EQ(parse_positional_kind(to_string(k)), k);
  }
  for (auto k : {NormKind::kNone, NormKind::kLayerNorm}) EXPECT_EQ(parse_norm_kind(to_string(k)), k);
  EXPECT_THROW(parse_ablation_mode("resample"), InvalidArgument);
}

TEST(Forward, TraceRowsAreCausalAndStochastic) {
  const Checkpoint ck = small_model();
  const auto r = forward(ck, kPrompt, {}, true);
  ASSERT_TRUE(r.trace.has_value());
  EXPECT_EQ(r.logits.rows(), kPrompt.size());
  EXPECT_EQ(r.logits.cols(), ck.config.vocab_size);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t h = 0; h < 2; ++h) {
      const Matrix& a = r.trace->at({l, h});
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
          if (j > i) {
            EXPECT_EQ(a(i, j), 0.0f);
          }
          sum += a(i, j);
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
      }
    }
  }
}

TEST(Forward, NoTraceUnlessRequested) {
  EXPECT_FALSE(forward(small_model(), kPrompt).trace.has_value());
}

class CausalityTest : public ::testing::TestWithParam<int> {};

TEST_P(CausalityTest, LaterTokensDoNotAffectEarlierLogits) {
  const bool mlp = GetParam() & 1;
  const NormKind norm = (GetParam() & 2) ? NormKind::kLayerNorm : NormKind::kNone;
  const Checkpoint ck = small_model(2, 2, 2, mlp, norm);
  InterventionPlan plan;
  if (GetParam() & 4) plan.entries[{0, 1}] = AblationMode::kMean;
  Tokens other = kPrompt;
  for (std::size_t t = 6; t < other.size(); ++t) other[t] = (other[t] + 5) % 11;
  const auto a = forward(ck, kPrompt, plan), b = forward(ck, other, plan);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t v = 0; v < ck.config.vocab_size; ++v) EXPECT_EQ(a.logits(i, v), b.logits(i, v));
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, CausalityTest, ::testing::Range(0, 8));

TEST(Decoder, IncrementalDecodingMatchesForwardExactly) {
  for (bool mlp : {false, true}) {
    const Checkpoint ck = small_model(3, 2, 2, mlp, mlp ? NormKind::kLayerNorm : NormKind::kNone);
    const auto full = forward(ck, kPrompt, {}, true);
    Decoder dec(ck, {}, true);
    for (std::size_t t = 0; t < kPrompt.size(); ++t) {
      const auto logits = dec.push(kPrompt[t]);
      for (std::size_t v = 0; v < logits.size(); ++v) EXPECT_EQ(logits[v], full.logits(t, v));
    }
    const AttentionTrace tr = dec.trace();
    EXPECT_EQ(tr.at({1, 1}), full.trace->at({1, 1}));
  }
}

TEST(Forward, RejectsBadInput) {
  const Checkpoint ck = small_model();
  EXPECT_THROW(forward(ck, Tokens{1, 99}), InvalidArgument);
  EXPECT_THROW(forward(ck, Tokens(25, 1)), InvalidArgument);
  EXPECT_THROW(forward(ck, Tokens{}), InvalidArgument);
  InterventionPlan bad;
  bad.entries[{2, 0}] = AblationMode::kZero;
  EXPECT_THROW(forward(ck, kPrompt, bad), InvalidArgument);
}

TEST(Ablation, ZeroAllHeadsLeavesResidualPath) {
  const Checkpoint ck = small_model(4);
  InterventionPlan plan;
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t h = 0; h < 2; ++h) plan.entries[{l, h}] = AblationMode::kZero;
  }
  const auto r = forward(ck, kPrompt, plan, true);
  for (std::size_t t = 0; t < kPrompt.size(); ++t) {
    std::vector<float> resid(ck.config.d_model);
    for (std::size_t d = 0; d < resid.size(); ++d) {
      resid[d] = ck.token_embedding(kPrompt[t], d) + ck.position_embedding(t, d);
    }
    std::vector<float> want(ck.config.vocab_size);
    vecmat(resid, ck.unembedding, want);
    for (std::size_t v = 0; v < want.size(); ++v) EXPECT_NEAR(r.logits(t, v), want[v], 1e-6);
  }
  for (float a : r.trace->at({1, 0}).values()) EXPECT_EQ(a, 0.0f);
}

TEST(Ablation, MeanPatternIsExactlyUniformAndOthersUntouched) {
  const Checkpoint ck = small_model(5);
  InterventionPlan plan;
  plan.entries[{1, 1}] = AblationMode::kMean;
  const auto base = forward(ck, kPrompt, {}, true);
  const auto abl = forward(ck, kPrompt, plan, true);
  const Matrix& a = abl.trace->at({1, 1});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) EXPECT_EQ(a(i, j), 1.0f / static_cast<float>(i + 1));
  }
  // Layer 0 runs before the ablated head, and (1,0) reads only layer-0 output.
  EXPECT_EQ(abl.trace->at({0, 0}), base.trace->at({0, 0}));
  EXPECT_EQ(abl.trace->at({0, 1}), base.trace->at({0, 1}));
  EXPECT_EQ(abl.trace->at({1, 0}), base.trace->at({1, 0}));
}

TEST(Ablation, EmptyPlanIsIdentity) {
  const Checkpoint ck = small_model(6);
  EXPECT_EQ(forward(ck, kPrompt, InterventionPlan{}).logits, forward(ck, kPrompt).logits);
}

TEST(NextToken, UniformLogitModel) {
  Checkpoint ck = small_model(7);
  ck.unembedding = Matrix(ck.config.d_model, ck.config.vocab_size);
  const auto p = next_token_distribution(ck, kPrompt);
  for (float v : p) EXPECT_NEAR(v, 1.0 / 11.0, 1e-7);
}

TEST(NextToken, RelabelingTokensPermutesTheDistribution) {
  ModelConfig c = small_config();
  c.vocab_size = 3;
  const Checkpoint ck = build_random_model(c, 8);
  const std::vector<TokenId> pi{2, 0, 1};
  Checkpoint perm = ck;
  for (TokenId t = 0; t < 3; ++t) {
    for (std::size_t d = 0; d < c.d_model; ++d) {
      perm.token_embedding(pi[t], d) = ck.token_embedding(t, d);
      perm.unembedding(d, pi[t]) = ck.unembedding(d, t);
    }
  }
  const Tokens prompt{0, 1, 2, 2, 0, 1, 1};
  Tokens relabeled;
  for (TokenId t : prompt) relabeled.push_back(pi[t]);
  const auto p = next_token_distribution(ck, prompt);
  const auto q = next_token_distribution(perm, relabeled);
  for (TokenId t = 0; t < 3; ++t) EXPECT_NEAR(q[pi[t]], p[t], 1e-6);
}

TEST(NextToken, CircuitRetrievesSuccessorInLongPrompt) {
  const Checkpoint& ck = default_circuit();
  Tokens prompt;
  for (TokenId t = 1; t <= 50; ++t) prompt.push_back(t + 10);  // x1..x50
  prompt.push_back(prompt[24]);                                // x25
  EXPECT_EQ(argmax(next_token_distribution(ck, prompt)), prompt[25]);
}

TEST(Greedy, ZeroTokensAndDeterminism) {
  const Checkpoint ck = small_model(9);
  EXPECT_TRUE(greedy_generate(ck, kPrompt, 0).empty());
  EXPECT_EQ(greedy_generate(ck, kPrompt, 5), greedy_generate(ck, kPrompt, 5));
  EXPECT_THROW(greedy_generate(ck, kPrompt, 20), InvalidArgument);
}

TEST(Greedy, CircuitContinuesRepeat) {
  const Tokens abca{10, 11, 12, 10};
  EXPECT_EQ(greedy_generate(default_circuit(), abca, 2), (Tokens{11, 12}));
}

TEST(Argmax, TiesGoToLowestIndex) {
  const std::vector<float> v{0.1f, 0.7f, 0.7f, 0.2f};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(Checkpoint, ValidateRejectsNonFinite) {
  Checkpoint ck = small_model();
  ck.layers[0].heads[0].query(0, 0) = std::nanf("");
  EXPECT_THROW(ck.validate(), InvalidArgument);
}

TEST(Checkpoint, NamedTensorsCoverAllocation) {
  Checkpoint ck = small_model(1, 2, 2, true, NormKind::kLayerNorm);
  std::size_t total = 0;
  for (const auto& t : named_tensors(ck)) {
    std::size_t n = 1;
    for (auto d : t.shape) n *= d;
    EXPECT_EQ(n, t.data.size()) << t.name;
    total += n;
  }
  EXPECT_GT(total, 0u);
}

}  // namespace
}  // namespace inductlab
