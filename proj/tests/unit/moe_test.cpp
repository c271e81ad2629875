// Copyright 2026 The xmoe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "xmoe/errors.hpp"
#include "xmoe/numerics/grad_check.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/moe/moe_layer.hpp"
#include "xmoe/moe/transformer.hpp"
#include "xmoe/moe/vocab.hpp"
#include "xmoe/oracles/reference.hpp"

namespace xmoe::moe {
namespace {

LmConfig small_lm(std::size_t gates = 2, std::size_t top_k = 2) {
  LmConfig c;
  c.vocab_size = 16;
  c.model_dim = 8;
  c.blocks = 2;
  c.heads = 2;
  c.context = 12;
  c.moe = decompose_experts(2, 8, 2, top_k, gates);
  return c;
}

TEST(Decompose, PreservesWeightCount) {
  const auto cfg = decompose_experts(6, 4096, 2);
  EXPECT_EQ(cfg.expert_count(), 12u);
  EXPECT_EQ(cfg.expert_hidden(), 2048u);
  EXPECT_EQ(expert_weight_count(cfg, 512), undecomposed_weight_count(6, 4096, 512));
  EXPECT_EQ(expert_weight_count(cfg, 512), 12u * 2 * 512 * 2048);
}

TEST(Decompose, IdentityHoldsForEveryDivisor) {
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::size_t d = 1; d <= 24; ++d)
      for (std::size_t r = 1; r <= d; ++r) {
        if (d % r) continue;
        const auto cfg = decompose_experts(n, d, r, 1);
        EXPECT_EQ(expert_weight_count(cfg, 7), undecomposed_weight_count(n, d, 7));
        EXPECT_EQ(expert_bias_count(cfg, 7), r * n * (d / r + 7));
      }
}

TEST(Decompose, RejectsInvalidLayouts) {
  EXPECT_THROW(decompose_experts(6, 10, 3), ConfigError);
  EXPECT_THROW(decompose_experts(6, 10, 0), ConfigError);
  EXPECT_THROW(decompose_experts(2, 8, 2, 5), ConfigError);
  EXPECT_THROW(decompose_experts(2, 8, 2, 0), ConfigError);
  EXPECT_THROW(decompose_experts(2, 8, 2, 2, 0), ConfigError);
}

TEST(TopK, OrdersByScoreThenIndex) {
  const std::vector<double> s = {0.1, 0.4, 0.4, 0.05, 0.05};
  EXPECT_EQ(top_k_select(s, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_k_select(s, 4), (std::vector<std::size_t>{1, 2, 0, 3}));
  EXPECT_THROW(top_k_select(s, 6), ConfigError);
}

TEST(TopK, SelectionIsInvariantToShiftsAndScaling) {
  Rng r(6);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + r.uniform_index(10), k = 1 + r.uniform_index(n);
    std::vector<double> s(n), shifted(n), scaled(n);
    const double c = 50 * r.normal(), a = 0.1 + 5 * r.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = r.normal();
      shifted[i] = s[i] + c;
      scaled[i] = a * s[i];
    }
    EXPECT_EQ(top_k_select(s, k), top_k_select(shifted, k));
    EXPECT_EQ(top_k_select(s, k), top_k_select(scaled, k));
  }
}

TEST(MoeLayer, EvaluatesExactlyTopKExpertsPerToken) {
  Rng r(2);
  const auto cfg = decompose_experts(3, 8, 2, 2, 2);
  const auto bank = ExpertBank::create(cfg, 4, r);
  const auto router = GateRouter::create(cfg, 4, r);
  MoeStats stats;
  const Var x = Var::constant(sample_normal(r, {5, 4}));
  moe_forward(bank, router, 1, x, {2, false, &stats});
  EXPECT_EQ(stats.tokens_routed, 5u);
  EXPECT_EQ(stats.expert_evaluations, 10u);
  EXPECT_THROW(moe_forward(bank, router, 2, x, {2, false, nullptr}), RoutingError);
}

TEST(MoeLayer, MatchesManualWeightedSum) {
  Rng r(3);
  const auto cfg = decompose_experts(2, 4, 2, 2, 1);
  const auto bank = ExpertBank::create(cfg, 3, r);
  const auto router = GateRouter::create(cfg, 3, r);
  const Var x = Var::constant(Tensor::matrix({{0.5, -1.0, 0.2}}));
  const Tensor y = moe_forward(bank, router, 0, x, {2, false, nullptr}).value();
  const Tensor scores = route(router, 0, x).value();
  const auto top = top_k_select(scores.values(), 2);
  Tensor want({1, 3});
  for (std::size_t e : top) {
    const Tensor o = expert_forward(bank.experts[e], x).value();
    for (std::size_t j = 0; j < 3; ++j) want[j] += scores[e] * o[j];
  }
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y[j], want[j], 1e-14);
}

TEST(MoeLayer, RenormalizedScoresSumToOne) {
  Rng r(3);
  const auto cfg = decompose_experts(2, 4, 2, 4, 1);
  auto bank = ExpertBank::create(cfg, 3, r);
  const auto router = GateRouter::create(cfg, 3, r);
  // Identical experts that output a constant: y = (sum of used scores) * c.
  for (auto& e : bank.experts) {
    e.w2.mutable_value().fill(0.0);
    e.b2.mutable_value().fill(1.0);
  }
  const Var x = Var::constant(Tensor::matrix({{0.5, -1.0, 0.2}}));
  const Tensor y = moe_forward(bank, router, 0, x, {2, true, nullptr}).value();
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  const Tensor all = moe_forward(bank, router, 0, x, {4, false, nullptr}).value();
  EXPECT_NEAR(all[0], 1.0, 1e-12);
}

TEST(MoeLayer, GradientsIncludeRouter) {
  Rng r(4);
  const auto cfg = decompose_experts(2, 4, 2, 2, 2);
  auto bank = ExpertBank::create(cfg, 3, r);
  auto router = GateRouter::create(cfg, 3, r);
  const Var x = Var::constant(sample_normal(r, {3, 3}));
  const Var w = Var::constant(sample_normal(r, {3, 3}));
  auto loss = [&] { return ops::sum(ops::mul(moe_forward(bank, router, 1, x, {2, false, nullptr}), w)); };
  EXPECT_LT(grad_check_parameter(loss, router.gates[1]), 1e-6);
  EXPECT_LT(grad_check_parameter(loss, bank.experts[0].w1), 1e-6);
}

TEST(Transformer, DenseEquivalenceWithOneGateAndAllExperts) {
  Rng init(8);
  LmConfig cfg = small_lm(1, 4);
  const LanguageModel lm(cfg, init);
  const std::vector<TokenId> tokens = {1, 4, 9, 10, 3, 15};
  const Tensor got = forward_lm(lm, tokens, 0).value();
  const auto want = oracles::dense_forward(lm, tokens, 0);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
}

TEST(Transformer, OutputAtPositionIgnoresLaterTokens) {
  Rng init(9);
  const LanguageModel lm(small_lm(), init);
  const Tensor a = forward_lm(lm, {1, 5, 6, 7}, 1).value();
  const Tensor b = forward_lm(lm, {1, 5, 6, 12, 13}, 1).value();
  for (std::size_t i = 0; i < 3 * 16; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Transformer, GatesChangeTheOutput) {
  Rng init(9);
  const LanguageModel lm(small_lm(), init);
  EXPECT_NE(forward_lm(lm, {1, 5, 6}, 0).value(), forward_lm(lm, {1, 5, 6}, 1).value());
}

TEST(Transformer, ContextAndGateErrors) {
  Rng init(9);
  const LanguageModel lm(small_lm(), init);
  EXPECT_THROW(forward_lm(lm, std::vector<TokenId>(13, 1), 0), ContextError);
  EXPECT_THROW(forward_lm(lm, {1}, 2), RoutingError);
  EXPECT_THROW(forward_lm(lm, {}, 0), DimensionError);
}

TEST(Transformer, InstrumentedCountsPerBlock) {
  Rng init(9);
  const LanguageModel lm(small_lm(), init);
  MoeStats stats;
  forward_lm(lm, {1, 2, 3, 4, 5}, 0, &stats);
  EXPECT_EQ(stats.expert_evaluations, 2u * 5 * 2);
}

TEST(Transformer, ParameterNamesAreUnique) {
  Rng init(9);
  const LanguageModel lm(small_lm(), init);
  std::set<std::string> names;
  for (const auto& [n, p] : lm.named_parameters()) EXPECT_TRUE(names.insert(n).second) << n;
  EXPECT_TRUE(names.count("lm.block1.router.gate1"));
}

TEST(Generate, GreedyIsDeterministicAndRespectsLimits) {
  Rng init(10);
  const LanguageModel lm(small_lm(), init);
  GenerateOptions g;
  g.max_len = 5;
  const auto a = generate(lm, {1, 4, 9}, 0, g);
  EXPECT_EQ(a, generate(lm, {1, 4, 9}, 0, g));
  EXPECT_LE(a.size(), 5u);
  for (TokenId t : a) EXPECT_NE(t, Vocab::kEos);
  g.max_len = 100;
  EXPECT_LE(generate(lm, {1, 4, 9}, 0, g).size(), 12u - 3u);
}

TEST(Generate, SamplingIsSeededAndValidatesTemperature) {
  Rng init(10);
  const LanguageModel lm(small_lm(), init);
  GenerateOptions g;
  g.mode = DecodeMode::kSample;
  g.seed = 4;
  g.max_len = 6;
  EXPECT_EQ(generate(lm, {1, 4}, 1, g), generate(lm, {1, 4}, 1, g));
  g.temperature = 0.0;
  EXPECT_THROW(generate(lm, {1, 4}, 1, g), ConfigError);
}

TEST(Generate, NllOfTeacherForcedReferenceMatchesManualSum) {
  Rng init(11);
  const LanguageModel lm(small_lm(), init);
  const std::vector<TokenId> prompt = {1, 4}, ref = {9, 10, 2};
  const double nll = explanation_nll(lm, prompt, ref, 0).item();
  const Tensor logits = forward_lm(lm, {1, 4, 9, 10}, 0).value();
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double mx = -1e300, z = 0.0;
    for (std::size_t v = 0; v < 16; ++v) mx = std::max(mx, logits.at(i + 1, v));
    for (std::size_t v = 0; v < 16; ++v) z += std::exp(logits.at(i + 1, v) - mx);
    want += -(logits.at(i + 1, ref[i]) - mx - std::log(z)) / 3.0;
  }
  EXPECT_NEAR(nll, want, 1e-12);
}

TEST(Vocab, ReservedLayoutAndLookup) {
  Vocab v;
  EXPECT_EQ(v.size(), Vocab::kReserved);
  EXPECT_EQ(v.token(Vocab::kEos), "<eos>");
  const TokenId a = v.add("spicy");
  EXPECT_EQ(v.add("spicy"), a);
  EXPECT_EQ(v.id("missing"), Vocab::kUnk);
  EXPECT_THROW(v.token(999), LookupError);
  EXPECT_THROW(v.add(""), DataError);
  EXPECT_EQ(v.decode({Vocab::kBos, a, Vocab::kEos, a}), "spicy spicy");
}

TEST(Vocab, RatingTokenRoundsAndClamps) {
  EXPECT_EQ(Vocab::rating_token(3.4), "r3");
  EXPECT_EQ(Vocab::rating_token(3.5), "r4");
  EXPECT_EQ(Vocab::rating_token(0.2), "r1");
  EXPECT_EQ(Vocab::rating_token(9.0), "r5");
  EXPECT_EQ(Vocab::rating_token(9.0, 10.0), "r9");
}

TEST(Vocab, PromptLayout) {
  Vocab v;
  for (const char* t : {"u7", "i2", "r4", "curry"}) v.add(t);
  const auto p = build_prompt(v, PromptInput{"7", "2", 4.2, {"curry", "unseen"}, 5.0});
  const std::vector<TokenId> want = {Vocab::kBos,           Vocab::kUserMarker, v.id("u7"),   Vocab::kItemMarker,
                                     v.id("i2"),            Vocab::kRatingMarker, v.id("r4"), Vocab::kFeatureMarker,
                                     v.id("curry"),         Vocab::kUnk,        Vocab::kExplanationMarker};
  EXPECT_EQ(p, want);
  const auto bare = build_prompt(v, PromptInput{"7", "2", 4.2, {}, 5.0});
  EXPECT_EQ(bare.size(), 8u);
}

TEST(Vocab, SaveLoadRoundTripAndValidation) {
  testing::TempDir dir;
  Vocab v;
  v.add("naïve");
  v.add("b");
  v.save(dir / "v.txt");
  EXPECT_EQ(Vocab::load(dir / "v.txt").tokens(), v.tokens());
  EXPECT_THROW(Vocab::from_tokens({"a", "b"}), DataError);
  auto dup = v.tokens();
  dup.push_back("b");
  EXPECT_THROW(Vocab::from_tokens(dup), DataError);
  EXPECT_THROW(Vocab::load(dir / "missing.txt"), IoError);
}

}  // namespace
}  // namespace xmoe::moe
