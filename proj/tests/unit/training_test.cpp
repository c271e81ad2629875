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
#include <limits>

#include "test_util.hpp"
#include "xmoe/errors.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/oracles/suites.hpp"
#include "xmoe/training/optimizer.hpp"
#include "xmoe/training/trainer.hpp"

namespace xmoe::training {
namespace {

void set_grad(Var& p, std::vector<double> g) {
  p.zero_grad();
  backward(ops::sum(ops::mul(p, Var::constant(Tensor::vector(std::move(g))))));
}

TEST(AdamW, FirstTwoStepsMatchHandComputation) {
  Var p = Var::parameter(Tensor::vector({1.0, -2.0}));
  AdamW opt({{"p", p}}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  set_grad(p, {0.5, -4.0});
  opt.step();
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.value()[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(p.value()[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);

  const double before = p.value()[0];
  set_grad(p, {1.5, 0.0});
  opt.step();
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * 1.5, v = 0.999 * 0.001 * 0.25 + 0.001 * 2.25;
  const double update = (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(p.value()[0], before - 0.1 * update, 1e-12);
  EXPECT_EQ(opt.state().step, 2u);
}

TEST(AdamW, DecoupledWeightDecayActsWithoutGradient) {
  Var p = Var::parameter(Tensor::vector({2.0}));
  AdamW opt({{"p", p}}, AdamWConfig{0.5, 0.9, 0.999, 1e-8, 0.1});
  opt.step();
  EXPECT_NEAR(p.value()[0], 2.0 - 0.5 * 0.1 * 2.0, 1e-12);
}

TEST(AdamW, NonFiniteGradientNamesParameterAndLeavesValues) {
  Var a = Var::parameter(Tensor::vector({1.0})), b = Var::parameter(Tensor::vector({3.0}));
  AdamW opt({{"a", a}, {"b", b}}, AdamWConfig{});
  set_grad(a, {1.0});
  set_grad(b, {1.0});
  b.node()->grad[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step();
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("parameter b"), std::string::npos);
  }
  EXPECT_EQ(a.value()[0], 1.0);
  EXPECT_EQ(opt.state().step, 0u);
}

TEST(AdamW, RejectsBadConfigAndConstants) {
  Var p = Var::parameter(Tensor::vector({1.0}));
  EXPECT_THROW(AdamW({{"p", p}}, AdamWConfig{0.0}), ConfigError);
  EXPECT_THROW(AdamW({{"p", p}}, AdamWConfig{0.1, 1.0}), ConfigError);
  EXPECT_THROW(AdamW({{"c", Var::constant(Tensor::vector({1.0}))}}, AdamWConfig{}), ConfigError);
}

TEST(ClipGradNorm, ScalesOnlyAboveThreshold) {
  Var a = Var::parameter(Tensor::vector({0.0, 0.0})), b = Var::parameter(Tensor::vector({0.0}));
  set_grad(a, {3.0, 0.0});
  set_grad(b, {4.0});
  const NamedParams ps = {{"a", a}, {"b", b}};
  EXPECT_DOUBLE_EQ(global_grad_norm(ps), 5.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 1.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 0.2);
  EXPECT_NEAR(global_grad_norm(ps), 1.0, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
  EXPECT_THROW(clip_grad_norm(ps, 0.0), ConfigError);
}

TEST(StageConfig, ValidationAndProfiles) {
  EXPECT_NO_THROW(StageConfig::desk_stage1().validate());
  EXPECT_NO_THROW(StageConfig::reference_stage2().validate());
  EXPECT_EQ(StageConfig::reference_stage1().beta, 0.1);
  EXPECT_EQ(StageConfig::desk_stage2().grad_accum_steps, 8u);
  auto c = StageConfig::desk_stage1();
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = StageConfig::desk_stage1();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = StageConfig::desk_stage1();
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

struct Fixture {
  data::DatasetSplit split;
  Model model;
  explicit Fixture(std::size_t clusters = 2)
      : split(data::split_records(data::generate_synthetic(testing::small_spec()).records, 5)),
        model(build_model(testing::small_model(clusters), split, 9)) {}
};

TEST(Trainer, StageTwoRequiresStageOne) {
  Fixture f;
  EXPECT_EQ(f.model.stage, 0);
  EXPECT_THROW(train_stage2(f.model, f.split.train, StageConfig::desk_stage2()), SequencingError);
}

TEST(Trainer, StageOneLowersLossAndRecordsHistory) {
  Fixture f;
  auto c = StageConfig::desk_stage1();
  c.epochs = 8;
  c.batch_size = 8;
  c.warmup_epochs = 1;
  const double before = stage1_loss(f.model, f.split.train, c.beta);
  std::size_t calls = 0;
  const auto h = train_stage1(f.model, f.split.train, c, &f.split.valid, [&](const EpochLog&) { ++calls; });
  EXPECT_LT(stage1_loss(f.model, f.split.train, c.beta), before);
  EXPECT_EQ(h.epochs.size(), 9u);
  EXPECT_EQ(calls, 9u);
  EXPECT_EQ(h.epochs.front().phase, "warmup");
  EXPECT_EQ(h.epochs.back().phase, "stage1");
  EXPECT_FALSE(std::isnan(h.epochs.back().valid_loss));
  EXPECT_EQ(f.model.stage, 1);
  std::size_t occupied = 0;
  for (std::size_t n : h.epochs.back().occupancy) occupied += n;
  EXPECT_EQ(occupied, f.split.train.size());

  const auto users = std::vector<std::string>{"0", "1", "2"};
  const auto k = user_clusters(f.model, f.split.train, users);
  ASSERT_EQ(k.size(), 3u);
  for (std::size_t c2 : k) EXPECT_LT(c2, 2u);
  EXPECT_THROW(user_clusters(f.model, f.split.train, {"nobody"}), LookupError);
}

TEST(Trainer, SameSeedSameWeights) {
  auto run = [] {
    Fixture f;
    auto c = StageConfig::desk_stage1();
    c.epochs = 2;
    c.batch_size = 8;
    train_stage1(f.model, f.split.train, c);
    std::vector<double> out;
    for (const auto& [name, p] : f.model.named_parameters())
      out.insert(out.end(), p.value().values().begin(), p.value().values().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Trainer, FrozenPriorStaysPutInStageTwo) {
  Fixture f;
  auto c1 = StageConfig::desk_stage1();
  c1.epochs = 1;
  c1.batch_size = 16;
  train_stage1(f.model, f.split.train, c1);
  const Tensor mean = f.model.vae.prior.mu.value();
  auto c2 = StageConfig::desk_stage2();
  c2.epochs = 2;
  c2.batch_size = 4;
  c2.grad_accum_steps = 2;
  c2.freeze_gmm = true;
  const double before = stage2_loss(f.model, f.split.train, c2.alpha, c2.beta);
  const auto h = train_stage2(f.model, f.split.train, c2);
  EXPECT_EQ(f.model.stage, 2);
  EXPECT_GT(h.steps, 0u);
  EXPECT_LT(stage2_loss(f.model, f.split.train, c2.alpha, c2.beta), before);
  const Tensor after = f.model.vae.prior.mu.value();
  for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_EQ(after[i], mean[i]);
}

// Mixing weight 1 keeps the language model out of the gradient; weight 0
// keeps the rating decoder out.
TEST(Trainer, MixingWeightDecouplesObjectives) {
  const auto report = oracles::decoupling_suite(2);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.checks.size(), 2u);
}

TEST(Trainer, Stage2ObjectiveChecksGateCount) {
  Fixture f;
  Rng r(1);
  Stage2Options o;
  o.gates = {0};
  const std::vector<data::InteractionRecord> batch(f.split.train.begin(), f.split.train.begin() + 2);
  EXPECT_THROW(stage2_objective(f.model, batch, 0.5, 0.1, r, o), DimensionError);
  EXPECT_THROW(stage2_objective(f.model, {}, 0.5, 0.1, r), DataError);
}

}  // namespace
}  // namespace xmoe::training
