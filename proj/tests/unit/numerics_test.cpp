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
#include <set>
#include <thread>

#include "xmoe/errors.hpp"
#include "xmoe/numerics/autodiff.hpp"
#include "xmoe/numerics/grad_check.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/numerics/rng.hpp"

namespace xmoe {
namespace {

TEST(Tensor, ShapeAndAccess) {
  Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(Tensor::vector({1, 2}).rows(), 1u);
  EXPECT_EQ(shape_str({2, 3}), "(2x3)");
}

TEST(Tensor, Errors) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), DimensionError);
  EXPECT_THROW(Tensor::vector({1, 2}).item(), ContractError);
  EXPECT_THROW(Tensor::vector({1, 2}).reshaped({3}), DimensionError);
}

TEST(Rng, MatchesReferenceSplitMix64) {
  // Published first outputs of SplitMix64 seeded with 0.
  Rng r(0);
  EXPECT_EQ(r.next_u64(), 0xE220A8397B1DCDAFull);
  EXPECT_EQ(r.next_u64(), 0x6E789E6AA1B965F4ull);
  EXPECT_EQ(r.next_u64(), 0x06C45D188009454Full);
}

TEST(Rng, DeterministicAndLabelledSubstreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  const Rng root(42);
  Rng x = root.substream("data"), y = root.substream("data"), z = root.substream("init");
  EXPECT_EQ(x.next_u64(), y.next_u64());
  EXPECT_NE(root.substream("data").next_u64(), z.next_u64());
  EXPECT_EQ(root.counter(), 0u);
}

TEST(Rng, UniformAndIndexRanges) {
  Rng r(9);
  std::set<std::size_t> seen;
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u / 20000.0;
    const std::size_t k = r.uniform_index(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_NEAR(mean, 0.5, 0.01);
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  const Tensor t = sample_normal(r, {40000});
  double m = 0.0, v = 0.0;
  for (double x : t.values()) m += x / 40000.0;
  for (double x : t.values()) v += (x - m) * (x - m) / 40000.0;
  EXPECT_NEAR(m, 0.0, 0.02);
  EXPECT_NEAR(v, 1.0, 0.03);
}

TEST(Autodiff, ChainRuleExample) {
  // f = sum((a * b) + a^2) -> df/da = b + 2a, df/db = a
  Var a = Var::parameter(Tensor::vector({1.0, -2.0}));
  Var b = Var::parameter(Tensor::vector({3.0, 0.5}));
  backward(ops::sum(ops::add(ops::mul(a, b), ops::square(a))));
  EXPECT_EQ(a.grad(), Tensor::vector({5.0, -3.5}));
  EXPECT_EQ(b.grad(), Tensor::vector({1.0, -2.0}));
}

TEST(Autodiff, SharedSubgraphVisitedOnce) {
  Var x = Var::parameter(Tensor::vector({2.0}));
  Var y = ops::mul(x, x);
  Var loss = ops::sum(ops::add(y, y));  // 2x^2 -> 4x
  Tape tape = Tape::record(loss);
  tape.backward();
  EXPECT_DOUBLE_EQ(x.grad().item(), 8.0);
  // mul, add and sum; the leaf has no rule.
  EXPECT_EQ(tape.visits(), 3u);
}

TEST(Autodiff, LeafGradientsAccumulateAcrossBackwardCalls) {
  Var x = Var::parameter(Tensor::vector({1.0, 2.0}));
  backward(ops::sum(x));
  backward(ops::sum(ops::scale(x, 2.0)));
  EXPECT_EQ(x.grad(), Tensor::vector({3.0, 3.0}));
  x.zero_grad();
  EXPECT_EQ(x.grad(), Tensor::vector({0.0, 0.0}));
}

TEST(Autodiff, NonScalarBackwardIsAContractError) {
  Var x = Var::parameter(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(backward(ops::scale(x, 2.0)), ContractError);
}

TEST(Autodiff, NoGradGuardProducesConstants) {
  Var x = Var::parameter(Tensor::vector({1.0}));
  {
    NoGradGuard g;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(ops::exp(x).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(ops::exp(x).requires_grad());
}

TEST(Autodiff, NoGradGuardIsPerThread) {
  NoGradGuard g;
  bool other = false;
  std::thread t([&] { other = grad_enabled(); });
  t.join();
  EXPECT_TRUE(other);
  EXPECT_FALSE(grad_enabled());
}

TEST(Autodiff, NonFiniteResultsAreRejected) {
  Var x = Var::parameter(Tensor::vector({1000.0}));
  EXPECT_THROW(ops::exp(x), DomainError);
  EXPECT_THROW(ops::log(Var::constant(Tensor::vector({-1.0}))), DomainError);
}

TEST(Autodiff, MutableValueOnlyOnLeaves) {
  Var x = Var::parameter(Tensor::vector({1.0}));
  Var y = ops::exp(x);
  EXPECT_NO_THROW(x.mutable_value());
  EXPECT_THROW(y.mutable_value(), ContractError);
}

TEST(Ops, WorkedValues) {
  const Var a = Var::constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const Var b = Var::constant(Tensor::matrix({{0, 1}, {1, 0}}));
  EXPECT_EQ(ops::matmul(a, b).value(), Tensor::matrix({{2, 1}, {4, 3}}));
  EXPECT_EQ(ops::matmul_nt(a, a).value(), Tensor::matrix({{5, 11}, {11, 25}}));
  EXPECT_EQ(ops::sum_rows(a).value(), Tensor::vector({3, 7}));
  EXPECT_EQ(ops::slice_cols(a, 1, 2).value(), Tensor::matrix({{2}, {4}}));
  EXPECT_EQ(ops::concat_cols({a, b}).value(), Tensor::matrix({{1, 2, 0, 1}, {3, 4, 1, 0}}));
  const std::vector<std::size_t> idx = {1, 1};
  EXPECT_EQ(ops::gather_rows(a, idx).value(), Tensor::matrix({{3, 4}, {3, 4}}));
  EXPECT_EQ(ops::scatter_rows(a, idx, 3).value(), Tensor::matrix({{0, 0}, {4, 6}, {0, 0}}));
  EXPECT_DOUBLE_EQ(ops::mean(a).item(), 2.5);
}

TEST(Ops, SoftmaxRowsSumToOneAndCausalMaskIsZero) {
  Rng r(1);
  const Var x = Var::constant(sample_normal(r, {4, 4}));
  const Tensor s = ops::softmax(x).value();
  const Tensor c = ops::causal_softmax(x).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double rs = 0.0, rc = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      rs += s.at(i, j);
      rc += c.at(i, j);
      if (j > i) {
        EXPECT_EQ(c.at(i, j), 0.0);
      }
    }
    EXPECT_NEAR(rs, 1.0, 1e-12);
    EXPECT_NEAR(rc, 1.0, 1e-12);
  }
}

TEST(Ops, LogSoftmaxIsStableForLargeLogits) {
  const Var x = Var::constant(Tensor::vector({1000.0, 1000.0}));
  const Tensor l = ops::log_softmax(x).value();
  EXPECT_NEAR(l[0], -std::log(2.0), 1e-12);
}

TEST(Ops, CrossEntropyMatchesHandComputation) {
  const Var logits = Var::constant(Tensor::matrix({{0.0, 0.0}, {std::log(3.0), 0.0}}));
  const std::vector<std::size_t> t = {0, 0};
  // mean(log 2, -log(3/4))
  EXPECT_NEAR(ops::cross_entropy(logits, t).item(), 0.5 * (std::log(2.0) - std::log(0.75)), 1e-12);
}

TEST(Ops, BceWithLogitsMatchesDefinition) {
  const double z = 0.7, y = 0.3;
  const double p = 1.0 / (1.0 + std::exp(-z));
  const double want = -(y * std::log(p) + (1 - y) * std::log(1 - p));
  EXPECT_NEAR(ops::bce_with_logits(Var::constant(Tensor::vector({z})), Tensor::vector({y})).item(), want, 1e-12);
  EXPECT_THROW(ops::bce_with_logits(Var::constant(Tensor::vector({z})), Tensor::vector({1.5})), DataError);
}

TEST(Ops, LogNormalDiagMatchesDensity) {
  const Var z = Var::constant(Tensor::vector({0.5, -1.0}));
  const Var mu = Var::constant(Tensor::vector({0.0, 0.0}));
  const Var var = Var::constant(Tensor::vector({1.0, 4.0}));
  const double want = -0.5 * (2 * std::log(2 * M_PI) + std::log(4.0) + 0.25 + 0.25);
  EXPECT_NEAR(ops::log_normal_diag(z, mu, var).item(), want, 1e-12);
  EXPECT_THROW(ops::log_normal_diag(z, mu, Var::constant(Tensor::vector({1.0, 0.0}))), DomainError);
}

TEST(Ops, ShapeErrors) {
  const Var a = Var::constant(Tensor({2, 3}));
  const Var b = Var::constant(Tensor({2, 2}));
  EXPECT_THROW(ops::add(a, b), DimensionError);
  EXPECT_THROW(ops::matmul(a, b), DimensionError);
  EXPECT_THROW(ops::causal_softmax(a), DimensionError);
  EXPECT_THROW(ops::slice_cols(a, 2, 4), DimensionError);
  const std::vector<std::size_t> bad = {5};
  EXPECT_THROW(ops::gather_rows(a, bad), LookupError);
  const std::vector<std::size_t> targets = {0, 7};
  EXPECT_THROW(ops::cross_entropy(a, targets), LookupError);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // A deliberately wrong backward rule: claims d/dx x^2 = x.
  auto wrong = [](const Var& x) {
    Tensor v = x.value();
    for (double& e : v.values()) e *= e;
    return ops::sum(make_op("bad_square", v, {x}, [x](const Tensor& g) mutable {
      Tensor& buf = x.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * x.value()[i];
    }));
  };
  EXPECT_GT(grad_check(wrong, Tensor::vector({1.0, 2.0})), 0.4);
  auto right = [](const Var& x) { return ops::sum(ops::square(x)); };
  EXPECT_LT(grad_check(right, Tensor::vector({1.0, 2.0})), 1e-8);
}

TEST(GradCheck, ParameterCheckRestoresState) {
  Var p = Var::parameter(Tensor::vector({0.3, -0.2}));
  backward(ops::sum(p));
  const Tensor before_value = p.value(), before_grad = p.grad();
  const double err = grad_check_parameter([&] { return ops::sum(ops::tanh(p)); }, p);
  EXPECT_LT(err, 1e-8);
  EXPECT_EQ(p.value(), before_value);
  EXPECT_EQ(p.grad(), before_grad);
}

// Property: d/dx sum(softmax(x) * w) agrees with finite differences for
// random inputs of random shape.
TEST(GradCheck, SoftmaxPropertyOverRandomShapes) {
  Rng r(17);
  for (int i = 0; i < 25; ++i) {
    const std::size_t m = 1 + r.uniform_index(4), n = 1 + r.uniform_index(6);
    const Tensor x = sample_normal(r, {m, n});
    const Var w = Var::constant(sample_normal(r, {m, n}));
    EXPECT_LT(grad_check([&](const Var& v) { return ops::sum(ops::mul(ops::softmax(v), w)); }, x), 1e-7);
  }
}

}  // namespace
}  // namespace xmoe
