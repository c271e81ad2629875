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

#include "xmoe/errors.hpp"
#include "xmoe/numerics/grad_check.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/oracles/reference.hpp"
#include "xmoe/vae/vae_gmm.hpp"

namespace xmoe::vae {
namespace {

GmmPrior two_component_prior() {
  return GmmPrior::from_values(Tensor::vector({0.25, 0.75}), Tensor::matrix({{-1.0, 0.0}, {2.0, 1.0}}),
                               Tensor::matrix({{1.0, 0.5}, {2.0, 1.0}}), false);
}

std::vector<std::vector<double>> rows(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) out[r].assign(t.values().begin() + r * t.cols(), t.values().begin() + (r + 1) * t.cols());
  return out;
}

VaeConfig tiny_config(EncoderKind kind = EncoderKind::kMlp) {
  VaeConfig c;
  c.user_rows = 4;
  c.item_rows = 3;
  c.embedding_dim = 4;
  c.latent_dim = 2;
  c.encoder_hidden = 5;
  c.decoder_hidden = 3;
  c.clusters = 2;
  c.encoder = kind;
  return c;
}

TEST(GmmPrior, PiIsASimplexAndProjectFloorsVariances) {
  GmmPrior p = two_component_prior();
  EXPECT_NEAR(p.pi()[0], 0.25, 1e-12);
  EXPECT_NEAR(p.pi()[0] + p.pi()[1], 1.0, 1e-12);
  Rng r(1);
  VaeGmm m(tiny_config(), r);
  m.prior.log_var.mutable_value().fill(-50.0);
  m.prior.project();
  const Tensor var = m.prior.variance();
  for (double v : var.values()) EXPECT_GE(v, kPriorVarianceFloor * (1 - 1e-12));
}

TEST(GmmPrior, RejectsInvalidValues) {
  EXPECT_THROW(GmmPrior::from_values(Tensor::vector({0.0, 1.0}), Tensor({2, 1}), Tensor({2, 1}, 1.0)), DomainError);
  EXPECT_THROW(GmmPrior::from_values(Tensor::vector({1.0}), Tensor({1, 2}), Tensor({1, 2}, -1.0)), DomainError);
}

TEST(Posterior, SumsToOneAndMatchesBayesRule) {
  const GmmPrior p = two_component_prior();
  const std::vector<double> z = {0.3, -0.4};
  const auto post = gmm_posterior(p, z);
  // Direct density evaluation.
  auto dens = [&](double pi, double m0, double m1, double v0, double v1) {
    return pi * std::exp(-0.5 * ((z[0] - m0) * (z[0] - m0) / v0 + (z[1] - m1) * (z[1] - m1) / v1)) /
           (2 * M_PI * std::sqrt(v0 * v1));
  };
  const double a = dens(0.25, -1, 0, 1, 0.5), b = dens(0.75, 2, 1, 2, 1);
  EXPECT_NEAR(post.gamma[0], a / (a + b), 1e-12);
  EXPECT_NEAR(post.gamma[0] + post.gamma[1], 1.0, 1e-12);
}

TEST(Posterior, FarPointsDoNotUnderflow) {
  const GmmPrior p = two_component_prior();
  const std::vector<double> far = {1e3, 1e3};
  const auto post = gmm_posterior(p, far);
  EXPECT_TRUE(std::isfinite(post.gamma[0]));
  EXPECT_NEAR(post.gamma[0] + post.gamma[1], 1.0, 1e-12);
}

TEST(Posterior, AssignClusterTiesGoLow) {
  EXPECT_EQ(assign_cluster(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(assign_cluster(std::vector<double>{0.1, 0.6, 0.3}), 1u);
}

TEST(Kl, MatchesIndependentOracleOnRandomCases) {
  Rng r(3);
  for (int t = 0; t < 30; ++t) {
    const std::size_t k = 1 + r.uniform_index(4), d = 1 + r.uniform_index(5);
    Tensor pi({k});
    double s = 0.0;
    for (double& v : pi.values()) s += (v = 0.1 + r.uniform());
    for (double& v : pi.values()) v /= s;
    Tensor mu = sample_normal(r, {k, d});
    Tensor var({k, d});
    for (double& v : var.values()) v = 0.3 + 2 * r.uniform();
    const GmmPrior prior = GmmPrior::from_values(pi, mu, var, false);
    std::vector<double> qm(d), qlv(d), g(k);
    for (auto& v : qm) v = r.normal();
    for (auto& v : qlv) v = r.normal();
    double gs = 0.0;
    for (auto& v : g) gs += (v = r.uniform());
    for (auto& v : g) v /= gs;
    if (k > 1) g[0] = 0.0;  // exercise the zero-responsibility path
    gs = 0.0;
    for (auto v : g) gs += v;
    for (auto& v : g) v /= gs;
    const double got = kl_closed_form(Var::constant(Tensor({d}, qm)), Var::constant(Tensor({d}, qlv)),
                                      Tensor({k}, g), prior)
                           .item();
    const double want = oracles::naive_mixture_kl(qm, qlv, g, std::vector<double>(pi.values().begin(), pi.values().end()),
                                                  rows(mu), rows(var));
    EXPECT_NEAR(got, want, 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST(Kl, IsNonNegative) {
  // q(z) q(c) is a proper distribution for any gamma, so the divergence
  // cannot go negative.
  Rng r(8);
  const GmmPrior p = two_component_prior();
  for (int t = 0; t < 50; ++t) {
    std::vector<double> m = {2 * r.normal(), 2 * r.normal()}, lv = {r.normal(), r.normal()};
    const auto g = gmm_posterior(p, m).gamma;
    const double kl =
        kl_closed_form(Var::constant(Tensor({2}, m)), Var::constant(Tensor({2}, lv)), Tensor({2}, g), p).item();
    EXPECT_GE(kl, -1e-12);
  }
}

TEST(Kl, ZeroWhenPosteriorEqualsSingleComponentPrior) {
  const GmmPrior p = GmmPrior::standard_normal(3);
  const double kl = kl_closed_form(Var::constant(Tensor({3}, 0.0)), Var::constant(Tensor({3}, 0.0)),
                                   Tensor::vector({1.0}), p)
                        .item();
  EXPECT_NEAR(kl, 0.0, 1e-14);
}

TEST(Kl, BatchedRowsEqualSingleEvaluations) {
  const GmmPrior p = two_component_prior();
  const Tensor mu = Tensor::matrix({{0.1, 0.2}, {-1.0, 3.0}});
  const Tensor lv = Tensor::matrix({{0.0, -1.0}, {0.5, 0.1}});
  const Tensor g = Tensor::matrix({{0.3, 0.7}, {1.0, 0.0}});
  const Tensor batch = kl_closed_form(Var::constant(mu), Var::constant(lv), g, p).value();
  for (std::size_t r = 0; r < 2; ++r) {
    const double one = kl_closed_form(Var::constant(Tensor({2}, {mu.at(r, 0), mu.at(r, 1)})),
                                      Var::constant(Tensor({2}, {lv.at(r, 0), lv.at(r, 1)})),
                                      Tensor({2}, {g.at(r, 0), g.at(r, 1)}), p)
                           .item();
    EXPECT_NEAR(batch[r], one, 1e-13);
  }
  EXPECT_THROW(kl_closed_form(Var::constant(mu), Var::constant(lv), Tensor::vector({1.0, 0.0}), p), DimensionError);
}

TEST(Kl, MonteCarloEstimateAgrees) {
  const GmmPrior p = two_component_prior();
  const std::vector<double> mu = {0.5, 0.2}, lv = {-0.5, 0.3}, g = {0.4, 0.6};
  const double closed =
      kl_closed_form(Var::constant(Tensor({2}, mu)), Var::constant(Tensor({2}, lv)), Tensor({2}, g), p).item();
  Rng r(21);
  const auto mc = mc_kl_estimate(mu, lv, g, p, r, 50000);
  EXPECT_LT(std::abs(mc.estimate - closed), 4 * mc.standard_error);
  EXPECT_THROW(mc_kl_estimate(mu, lv, g, p, r, 1), ContractError);
}

TEST(Encoder, OutputsAreFiniteAndIdsAreChecked) {
  for (auto kind : {EncoderKind::kMlp, EncoderKind::kAttention}) {
    Rng r(4);
    const VaeGmm m(tiny_config(kind), r);
    const std::vector<std::size_t> users = {0, 3}, items = {2, 1};
    auto [mu, lv] = encode_batch(m, users, items);
    EXPECT_EQ(mu.shape(), (Shape{2, 2}));
    EXPECT_TRUE(mu.value().all_finite());
    for (double v : lv.value().values()) {
      EXPECT_GE(v, kLogVarMin);
      EXPECT_LE(v, kLogVarMax);
    }
    EXPECT_THROW(encode(m, 4, 0), LookupError);
    EXPECT_THROW(encode(m, 0, 3), LookupError);
  }
}

TEST(Reparameterize, ZeroNoiseReturnsTheMean) {
  const Var mu = Var::constant(Tensor::vector({1.0, -2.0}));
  const Var lv = Var::constant(Tensor::vector({0.3, 0.1}));
  Rng r(1);
  const auto s = reparameterize(mu, lv, r, true);
  EXPECT_EQ(s.z.value(), mu.value());
  EXPECT_EQ(r.counter(), 0u);
  const auto t = reparameterize_with(mu, lv, Tensor::vector({1.0, 0.0}));
  EXPECT_NEAR(t.z.value()[0], 1.0 + std::exp(0.15), 1e-12);
}

TEST(Elbo, GradientsMatchFiniteDifferencesWithPinnedResponsibilities) {
  Rng init(5);
  VaeGmm m(tiny_config(EncoderKind::kAttention), init);
  RatingBatch b{{1, 2, 3}, {0, 1, 2}, {0.2, 0.8, 1.0}};
  ElboOptions opt;
  {
    Rng r(9);
    opt.gamma = elbo_loss(m, m.prior, b, 0.5, r, {}).gamma;
  }
  auto loss = [&] {
    Rng r(9);
    return elbo_loss(m, m.prior, b, 0.5, r, opt).loss;
  };
  for (auto& [name, p] : m.named_parameters()) {
    Var v = p;
    EXPECT_LT(grad_check_parameter(loss, v), 1e-6) << name;
  }
}

TEST(Elbo, ValidatesInputs) {
  Rng init(5);
  const VaeGmm m(tiny_config(), init);
  Rng r(1);
  EXPECT_THROW(elbo_loss(m, m.prior, RatingBatch{}, 0.1, r), DataError);
  EXPECT_THROW(elbo_loss(m, m.prior, RatingBatch{{1}, {1}, {1.2}}, 0.1, r), DataError);
  EXPECT_THROW(elbo_loss(m, m.prior, RatingBatch{{1}, {1}, {0.5}}, -1.0, r), ConfigError);
  EXPECT_THROW(elbo_loss(m, GmmPrior::standard_normal(5), RatingBatch{{1}, {1}, {0.5}}, 0.1, r), DimensionError);
}

TEST(InitPrior, RecoversWellSeparatedBlobs) {
  Rng r(2);
  Tensor pts({90, 2});
  for (std::size_t i = 0; i < 90; ++i) {
    const double cx = (i % 3) * 10.0;
    pts.at(i, 0) = cx + 0.1 * r.normal();
    pts.at(i, 1) = -cx + 0.1 * r.normal();
  }
  Rng seed(7);
  const GmmPrior p = init_gmm_prior(pts, 3, seed);
  const Tensor pi = p.pi();
  for (double w : pi.values()) EXPECT_NEAR(w, 1.0 / 3.0, 1e-9);
  std::vector<double> xs;
  for (std::size_t c = 0; c < 3; ++c) xs.push_back(p.mu.value().at(c, 0));
  std::sort(xs.begin(), xs.end());
  EXPECT_NEAR(xs[0], 0.0, 0.1);
  EXPECT_NEAR(xs[1], 10.0, 0.1);
  EXPECT_NEAR(xs[2], 20.0, 0.1);
  // Absorbing posterior variance only widens components.
  Tensor extra({90, 2}, 0.5);
  Rng seed2(7);
  const GmmPrior wide = init_gmm_prior(pts, 3, seed2, &extra);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_GT(wide.variance()[i], p.variance()[i]);
}

TEST(InitPrior, TooFewDistinctPointsIsAnError) {
  Tensor pts({4, 2}, 1.0);
  Rng r(1);
  EXPECT_THROW(init_gmm_prior(pts, 2, r), InitializationError);
}

}  // namespace
}  // namespace xmoe::vae
