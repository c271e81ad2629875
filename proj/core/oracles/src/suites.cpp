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

#include "xmoe/oracles/suites.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>

#include "xmoe/errors.hpp"
#include "xmoe/eval/metrics.hpp"
#include "xmoe/numerics/grad_check.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/oracles/reference.hpp"
#include "xmoe/training/trainer.hpp"

namespace xmoe::oracles {

bool SuiteReport::passed() const { return failures() == 0 && !checks.empty(); }

std::size_t SuiteReport::failures() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const Check& c) { return !c.passed; }));
}

const Check* SuiteReport::worst() const {
  const Check* w = nullptr;
  double ratio = -1.0;
  for (const auto& c : checks) {
    const double r = c.limit > 0.0 ? c.value / c.limit : (c.passed ? 0.0 : INFINITY);
    if (!c.passed && (w == nullptr || w->passed)) {
      w = &c;
      ratio = r;
    } else if ((w == nullptr || c.passed == w->passed) && r > ratio) {
      w = &c;
      ratio = r;
    }
  }
  return w;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor uniform(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Values at least 0.05 away from the clamp bounds +-0.5.
Tensor away_from_kinks(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) {
    const double mag = 0.05 + 0.4 * rng.uniform();
    switch (rng.uniform_index(3)) {
      case 0: v = -0.5 - mag; break;
      case 1: v = 0.5 + mag; break;
      default: v = (0.45 - mag) * (rng.uniform() < 0.5 ? -1.0 : 1.0) * 0.999; break;
    }
  }
  return t;
}

// Error of d/dx sum(op(x) * W) for a fixed random W.
double check_op(const std::function<Var(const Var&)>& op, const Tensor& x, Rng& rng, double h) {
  Tensor probe;
  {
    NoGradGuard no_grad;
    probe = op(Var::constant(x)).value();
  }
  const Var w = Var::constant(uniform(rng, probe.shape(), 0.5, 1.5));
  return grad_check([&](const Var& v) { return ops::sum(ops::mul(op(v), w)); }, x, h);
}

vae::GmmPrior random_prior(Rng& rng, std::size_t k, std::size_t d) {
  Tensor pi({k});
  double z = 0.0;
  for (double& p : pi.values()) z += (p = std::exp(rng.normal()));
  for (double& p : pi.values()) p /= z;
  Tensor mu = sample_normal(rng, {k, d});
  Tensor var = uniform(rng, {k, d}, 0.4, 2.0);
  return vae::GmmPrior::from_values(pi, mu, var, false);
}

std::vector<double> random_simplex(Rng& rng, std::size_t k) {
  std::vector<double> g(k);
  double z = 0.0;
  for (double& v : g) z += (v = std::exp(1.5 * rng.normal()));
  for (double& v : g) v /= z;
  return g;
}

void record_max(std::map<std::string, double>& worst, const std::string& name, double err) {
  auto [it, inserted] = worst.emplace(name, err);
  if (!inserted) it->second = std::max(it->second, err);
}

std::vector<std::string> random_words(Rng& rng, std::size_t min_len, std::size_t max_len) {
  static const std::vector<std::string> kWords = {"a", "b", "c", "d", "e", "f", "the", "cat"};
  const std::size_t len = min_len + rng.uniform_index(max_len - min_len + 1);
  std::vector<std::string> out(len);
  for (auto& w : out) w = kWords[rng.uniform_index(kWords.size())];
  return out;
}

Check make_check(std::string name, double value, double limit, bool passed, std::string detail = {}) {
  return Check{std::move(name), passed, value, limit, std::move(detail)};
}

}  // namespace

TinySetup tiny_setup(std::uint64_t seed, bool attention_encoder) {
  data::SynthSpec spec;
  spec.clusters = 2;
  spec.users = 6;
  spec.items = 5;
  spec.records_per_user = 3;
  spec.seed = seed;
  TinySetup s;
  s.split = data::split_records(data::generate_synthetic(spec).records, seed);
  training::ModelConfig mc;
  mc.embedding_dim = 4;
  mc.latent_dim = 3;
  mc.encoder_hidden = 5;
  mc.decoder_hidden = 4;
  mc.clusters = 2;
  mc.encoder = attention_encoder ? vae::EncoderKind::kAttention : vae::EncoderKind::kMlp;
  mc.model_dim = 8;
  mc.blocks = 1;
  mc.heads = 2;
  mc.context = 24;
  mc.base_experts = 2;
  mc.base_hidden = 8;
  mc.factor = 2;
  mc.top_k = 2;
  mc.max_explanation = 12;
  s.model = training::build_model(mc, s.split, seed);
  // Give the prior distinct, non-trivial components.
  Rng rng = Rng(seed).substream("tiny-prior");
  s.model.vae.prior.pi_logits.mutable_value() = uniform(rng, {2}, -0.5, 0.5);
  s.model.vae.prior.mu.mutable_value() = uniform(rng, {2, 3}, -1.0, 1.0);
  s.model.vae.prior.log_var.mutable_value() = uniform(rng, {2, 3}, -0.5, 0.5);
  s.batch.assign(s.split.train.begin(), s.split.train.begin() + 4);
  return s;
}

SuiteReport grad_suite(std::size_t seeds, double h, double tolerance) {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  for (std::size_t seed = 1; seed <= seeds; ++seed) {
    Rng rng(1000 + seed);
    const Tensor a = uniform(rng, {3, 4}), b = uniform(rng, {3, 4});
    const Var bc = Var::constant(b);
    const Var ac = Var::constant(a);
    auto unary = [&](const std::string& name, const std::function<Var(const Var&)>& op, const Tensor& x) {
      record_max(worst, name, check_op(op, x, rng, h));
    };
    unary("add/lhs", [&](const Var& x) { return ops::add(x, bc); }, a);
    unary("add/rhs", [&](const Var& x) { return ops::add(ac, x); }, b);
    unary("sub/lhs", [&](const Var& x) { return ops::sub(x, bc); }, a);
    unary("sub/rhs", [&](const Var& x) { return ops::sub(ac, x); }, b);
    unary("mul/lhs", [&](const Var& x) { return ops::mul(x, bc); }, a);
    unary("mul/rhs", [&](const Var& x) { return ops::mul(ac, x); }, b);
    unary("mul/self", [&](const Var& x) { return ops::mul(x, x); }, a);
    unary("neg", [](const Var& x) { return ops::neg(x); }, a);
    unary("scale", [](const Var& x) { return ops::scale(x, 1.7); }, a);
    unary("add_scalar", [](const Var& x) { return ops::add_scalar(x, 0.3); }, a);
    unary("exp", [](const Var& x) { return ops::exp(x); }, a);
    unary("log", [](const Var& x) { return ops::log(x); }, uniform(rng, {3, 4}, 0.5, 2.0));
    unary("square", [](const Var& x) { return ops::square(x); }, a);
    unary("sigmoid", [](const Var& x) { return ops::sigmoid(x); }, a);
    unary("tanh", [](const Var& x) { return ops::tanh(x); }, a);
    unary("gelu", [](const Var& x) { return ops::gelu(x); }, uniform(rng, {3, 4}, -3.0, 3.0));
    unary("clamp", [](const Var& x) { return ops::clamp(x, -0.5, 0.5); }, away_from_kinks(rng, {3, 4}));
    unary("sum", [](const Var& x) { return ops::sum(x); }, a);
    unary("mean", [](const Var& x) { return ops::mean(x); }, a);
    {
      const Tensor u = uniform(rng, {5}), v = uniform(rng, {5});
      const Var vc = Var::constant(v);
      unary("dot", [&](const Var& x) { return ops::dot(x, vc); }, u);
    }
    unary("sum_rows", [](const Var& x) { return ops::sum_rows(x); }, a);
    unary("reshape", [](const Var& x) { return ops::reshape(x, {4, 3}); }, a);
    {
      const Tensor m = uniform(rng, {4, 2});
      const Var mc = Var::constant(m);
      unary("matmul/lhs", [&](const Var& x) { return ops::matmul(x, mc); }, a);
      unary("matmul/rhs", [&](const Var& x) { return ops::matmul(ac, x); }, m);
      const Tensor n = uniform(rng, {2, 4});
      const Var nc = Var::constant(n);
      unary("matmul_nt/lhs", [&](const Var& x) { return ops::matmul_nt(x, nc); }, a);
      unary("matmul_nt/rhs", [&](const Var& x) { return ops::matmul_nt(ac, x); }, n);
    }
    {
      const Tensor v = uniform(rng, {4}, 0.5, 1.5), w = uniform(rng, {3}, 0.5, 1.5);
      const Var vc = Var::constant(v), wc = Var::constant(w);
      unary("add_row_vector/lhs", [&](const Var& x) { return ops::add_row_vector(x, vc); }, a);
      unary("add_row_vector/rhs", [&](const Var& x) { return ops::add_row_vector(ac, x); }, v);
      unary("mul_row_vector/lhs", [&](const Var& x) { return ops::mul_row_vector(x, vc); }, a);
      unary("mul_row_vector/rhs", [&](const Var& x) { return ops::mul_row_vector(ac, x); }, v);
      unary("row_scale/lhs", [&](const Var& x) { return ops::row_scale(x, wc); }, a);
      unary("row_scale/rhs", [&](const Var& x) { return ops::row_scale(ac, x); }, w);
    }
    unary("softmax", [](const Var& x) { return ops::softmax(x); }, uniform(rng, {3, 4}, -2.0, 2.0));
    unary("log_softmax", [](const Var& x) { return ops::log_softmax(x); }, uniform(rng, {3, 4}, -2.0, 2.0));
    unary("causal_softmax", [](const Var& x) { return ops::causal_softmax(x); }, uniform(rng, {4, 4}, -2.0, 2.0));
    {
      const std::vector<std::size_t> gi = {0, 2, 2, 4}, si = {4, 1, 3}, pi = {0, 5, 5, 11};
      unary("gather_rows", [&](const Var& x) { return ops::gather_rows(x, gi); }, uniform(rng, {5, 3}));
      unary("scatter_rows", [&](const Var& x) { return ops::scatter_rows(x, si, 5); }, uniform(rng, {3, 2}));
      unary("pick", [&](const Var& x) { return ops::pick(x, pi); }, a);
    }
    unary("slice_cols", [](const Var& x) { return ops::slice_cols(x, 1, 3); }, a);
    unary("slice_rows", [](const Var& x) { return ops::slice_rows(x, 1, 3); }, a);
    unary("concat_cols/first", [&](const Var& x) { return ops::concat_cols({x, bc}); }, a);
    unary("concat_cols/second", [&](const Var& x) { return ops::concat_cols({ac, x}); }, b);
    {
      const Tensor g = uniform(rng, {4}, 0.5, 1.5);
      const Var gc = Var::constant(g);
      unary("rms_norm/x", [&](const Var& x) { return ops::rms_norm(x, gc); }, a);
      unary("rms_norm/gain", [&](const Var& x) { return ops::rms_norm(ac, x); }, g);
    }
    {
      const std::vector<std::size_t> targets = {1, 4, 0};
      unary("cross_entropy", [&](const Var& x) { return ops::cross_entropy(x, targets); }, uniform(rng, {3, 5}, -2, 2));
      const Tensor t = Tensor::vector({0.0, 0.3, 0.8, 1.0});
      unary("bce_with_logits", [&](const Var& x) { return ops::bce_with_logits(x, t); }, uniform(rng, {4}, -2, 2));
    }
    {
      const Tensor z = uniform(rng, {5}), mu = uniform(rng, {5}), var = uniform(rng, {5}, 0.5, 2.0);
      const Var zc = Var::constant(z), mc = Var::constant(mu), vc = Var::constant(var);
      unary("log_normal_diag/z", [&](const Var& x) { return ops::log_normal_diag(x, mc, vc); }, z);
      unary("log_normal_diag/mu", [&](const Var& x) { return ops::log_normal_diag(zc, x, vc); }, mu);
      unary("log_normal_diag/var", [&](const Var& x) { return ops::log_normal_diag(zc, mc, x); }, var);
    }
    {
      // Mixture KL with a (2 x 3) posterior batch against a K = 3 prior.
      const std::size_t k = 3, d = 3;
      const vae::GmmPrior prior = random_prior(rng, k, d);
      Tensor gamma({2, k});
      for (std::size_t r = 0; r < 2; ++r) {
        const auto g = random_simplex(rng, k);
        std::copy(g.begin(), g.end(), gamma.values().begin() + r * k);
      }
      const Tensor mu = uniform(rng, {2, d}), lv = uniform(rng, {2, d}, -1.0, 1.0);
      const Var muc = Var::constant(mu), lvc = Var::constant(lv);
      unary("kl_closed_form/mu", [&](const Var& x) { return vae::kl_closed_form(x, lvc, gamma, prior); }, mu);
      unary("kl_closed_form/log_var", [&](const Var& x) { return vae::kl_closed_form(muc, x, gamma, prior); }, lv);
      unary("kl_closed_form/prior_pi_logits", [&](const Var& x) {
        vae::GmmPrior p = prior;
        p.pi_logits = x;
        return vae::kl_closed_form(muc, lvc, gamma, p);
      }, prior.pi_logits.value());
      unary("kl_closed_form/prior_mu", [&](const Var& x) {
        vae::GmmPrior p = prior;
        p.mu = x;
        return vae::kl_closed_form(muc, lvc, gamma, p);
      }, prior.mu.value());
      unary("kl_closed_form/prior_log_var", [&](const Var& x) {
        vae::GmmPrior p = prior;
        p.log_var = x;
        return vae::kl_closed_form(muc, lvc, gamma, p);
      }, prior.log_var.value());
    }

    // Full losses on a 4-record micro-batch. Noise, responsibilities and
    // gates are pinned so the loss is a smooth function of the parameters.
    TinySetup tiny = tiny_setup(seed, seed % 2 == 0);
    auto& model = tiny.model;
    const auto batch = training::make_rating_batch(model, tiny.batch);
    vae::ElboOptions pinned;
    {
      Rng r(seed);
      pinned.gamma = vae::elbo_loss(model.vae, model.vae.prior, batch, 0.7, r, {}).gamma;
    }
    auto stage1 = [&] {
      Rng r(seed);
      return vae::elbo_loss(model.vae, model.vae.prior, batch, 0.7, r, pinned).loss;
    };
    for (auto& [name, p] : model.vae.named_parameters()) {
      Var param = p;
      record_max(worst, "stage1_loss/" + name.substr(0, name.rfind('.')), grad_check_parameter(stage1, param, h));
    }
    training::Stage2Options s2;
    s2.elbo = pinned;
    for (const auto& r : tiny.batch) s2.gates.push_back(training::record_gate(model, r));
    auto stage2 = [&] {
      Rng r(seed);
      return training::stage2_objective(model, tiny.batch, 0.4, 0.7, r, s2).loss;
    };
    for (auto& [name, p] : model.named_parameters()) {
      Var param = p;
      record_max(worst, "stage2_loss/" + name.substr(0, name.find('.')), grad_check_parameter(stage2, param, h));
    }
  }
  SuiteReport report;
  report.suite = "grads";
  for (const auto& [name, err] : worst) {
    report.checks.push_back(make_check(name, err, tolerance, err <= tolerance, "max relative error over seeds"));
  }
  report.seconds = seconds_since(t0);
  return report;
}

SuiteReport kl_suite(std::size_t samples) {
  const auto t0 = Clock::now();
  SuiteReport report;
  report.suite = "kl";
  const std::vector<std::pair<std::size_t, std::size_t>> configs = {{1, 2}, {1, 8}, {2, 2}, {2, 8}, {3, 2},
                                                                    {3, 8}, {5, 2}, {5, 8}, {3, 8}, {5, 2}};
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto [k, d] = configs[i];
    Rng rng(500 + i);
    const vae::GmmPrior prior = random_prior(rng, k, d);
    std::vector<double> mu(d), lv(d);
    for (auto& v : mu) v = rng.normal();
    for (auto& v : lv) v = -1.0 + 2.0 * rng.uniform();
    const auto gamma = k == 1 ? std::vector<double>{1.0} : random_simplex(rng, k);
    const double closed =
        vae::kl_closed_form(Var::constant(Tensor({d}, mu)), Var::constant(Tensor({d}, lv)), Tensor({k}, gamma), prior)
            .item();
    Rng mc_rng = rng.substream("mc");
    const auto mc = vae::mc_kl_estimate(mu, lv, gamma, prior, mc_rng, samples);
    const double z = std::abs(closed - mc.estimate) / mc.standard_error;
    report.checks.push_back(make_check("K=" + std::to_string(k) + " D=" + std::to_string(d) + " #" + std::to_string(i),
                                       z, 3.0, z <= 3.0,
                                       "closed " + std::to_string(closed) + " mc " + std::to_string(mc.estimate) +
                                           " se " + std::to_string(mc.standard_error)));
  }
  report.seconds = seconds_since(t0);
  return report;
}

SuiteReport kl_reduction_suite(std::size_t cases, double tolerance) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(900 + i);
    const std::size_t d = 1 + rng.uniform_index(8);
    std::vector<double> mu(d), lv(d);
    for (auto& v : mu) v = 2.0 * rng.normal();
    for (auto& v : lv) v = -3.0 + 6.0 * rng.uniform();
    const double closed = vae::kl_closed_form(Var::constant(Tensor({d}, mu)), Var::constant(Tensor({d}, lv)),
                                              Tensor::vector({1.0}), vae::GmmPrior::standard_normal(d))
                              .item();
    worst = std::max(worst, std::abs(closed - standard_normal_kl(mu, lv)));
  }
  SuiteReport report;
  report.suite = "vae";
  report.checks.push_back(make_check("K=1 standard-normal reduction", worst, tolerance, worst <= tolerance,
                                     std::to_string(cases) + " random draws"));
  report.seconds = seconds_since(t0);
  return report;
}

SuiteReport moe_suite(double tolerance) {
  const auto t0 = Clock::now();
  SuiteReport report;
  report.suite = "moe";
  {
    const auto cfg = moe::decompose_experts(6, 4096, 2);
    const std::size_t m = 4096;
    const bool ok = cfg.expert_count() == 12 && cfg.expert_hidden() == 2048 &&
                    moe::expert_weight_count(cfg, m) == moe::undecomposed_weight_count(6, 4096, m);
    report.checks.push_back(make_check("identity N=6 d=4096 r=2", static_cast<double>(moe::expert_weight_count(cfg, m)),
                                       static_cast<double>(moe::undecomposed_weight_count(6, 4096, m)), ok,
                                       std::to_string(cfg.expert_count()) + " experts x " +
                                           std::to_string(cfg.expert_hidden())));
  }
  Rng rng(77);
  for (int i = 0; i < 5; ++i) {
    const std::size_t n = 1 + rng.uniform_index(8), r = 1 + rng.uniform_index(4);
    const std::size_t d = r * (1 + rng.uniform_index(64)), m = 1 + rng.uniform_index(128);
    const auto cfg = moe::decompose_experts(n, d, r, 1);
    const bool ok = moe::expert_weight_count(cfg, m) == moe::undecomposed_weight_count(n, d, m) &&
                    cfg.expert_count() == r * n && cfg.expert_hidden() * r == d;
    report.checks.push_back(make_check("identity N=" + std::to_string(n) + " d=" + std::to_string(d) +
                                           " r=" + std::to_string(r) + " m=" + std::to_string(m),
                                       static_cast<double>(moe::expert_weight_count(cfg, m)),
                                       static_cast<double>(moe::undecomposed_weight_count(n, d, m)), ok));
  }
  // Dense equivalence: one gate, every expert selected.
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng init(seed);
    moe::LmConfig lc;
    lc.vocab_size = 20;
    lc.model_dim = 8;
    lc.blocks = 2;
    lc.heads = 2;
    lc.context = 16;
    lc.moe = moe::decompose_experts(3, 8, 2, 6, 1);
    const moe::LanguageModel lm(lc, init);
    std::vector<moe::TokenId> tokens(10);
    for (auto& t : tokens) t = init.uniform_index(lc.vocab_size);
    const Tensor got = moe::forward_lm(lm, tokens, 0).value();
    const auto want = dense_forward(lm, tokens, 0);
    double err = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(got[i] - want[i]));
    report.checks.push_back(make_check("dense equivalence seed " + std::to_string(seed), err, tolerance, err <= tolerance));
  }
  report.seconds = seconds_since(t0);
  return report;
}

SuiteReport routing_suite() {
  const auto t0 = Clock::now();
  SuiteReport report;
  report.suite = "routing";
  {
    // Default architecture: N = 6, d = 128, r = 2, k = 2, three gates.
    const training::ModelConfig defaults;
    Rng init(3);
    moe::LmConfig lc;
    lc.vocab_size = 40;
    lc.model_dim = defaults.model_dim;
    lc.blocks = defaults.blocks;
    lc.heads = defaults.heads;
    lc.context = defaults.context;
    lc.moe = moe::decompose_experts(defaults.base_experts, defaults.base_hidden, defaults.factor, defaults.top_k,
                                    defaults.clusters);
    const moe::LanguageModel lm(lc, init);
    bool exact = true;
    std::size_t calls = 0;
    for (std::size_t gate = 0; gate < lc.moe.gates; ++gate) {
      for (const std::size_t len : std::array<std::size_t, 3>{1, 7, 20}) {
        std::vector<moe::TokenId> tokens(len);
        for (auto& t : tokens) t = init.uniform_index(lc.vocab_size);
        for (const auto& block : lm.blocks) {
          moe::MoeStats stats;
          const Var x = Var::constant(sample_normal(init, {len, lc.model_dim}));
          moe::moe_forward(block.bank, block.router, gate, x, moe::MoeOptions{lc.moe.top_k, false, &stats});
          exact = exact && stats.tokens_routed == len && stats.expert_evaluations == lc.moe.top_k * len;
          ++calls;
        }
        moe::MoeStats stats;
        moe::forward_lm(lm, tokens, gate, &stats);
        exact = exact && stats.expert_evaluations == lc.moe.top_k * len * lc.blocks;
      }
    }
    report.checks.push_back(make_check("k=2 experts evaluated per token", exact ? 2.0 : 0.0, 2.0, exact,
                                       std::to_string(calls) + " instrumented MoE calls"));
  }
  {
    Rng rng(4);
    bool same = true;
    double drift = 0.0;
    for (int i = 0; i < 200; ++i) {
      const std::size_t n = 2 + rng.uniform_index(15);
      std::vector<double> logits(n), shifted(n);
      const double c = 200.0 * (rng.uniform() - 0.5);
      for (std::size_t j = 0; j < n; ++j) {
        logits[j] = 3.0 * rng.normal();
        shifted[j] = logits[j] + c;
      }
      const Tensor p = ops::softmax(Var::constant(Tensor({1, n}, logits))).value();
      const Tensor q = ops::softmax(Var::constant(Tensor({1, n}, shifted))).value();
      for (std::size_t j = 0; j < n; ++j) drift = std::max(drift, std::abs(p[j] - q[j]));
      const std::size_t k = 1 + rng.uniform_index(n);
      same = same && moe::top_k_select(p.values(), k) == moe::top_k_select(q.values(), k);
      same = same && vae::assign_cluster(logits) == vae::assign_cluster(shifted);
    }
    report.checks.push_back(make_check("selections invariant to logit shifts", same ? 0.0 : 1.0, 0.0, same));
    report.checks.push_back(make_check("softmax drift under logit shifts", drift, 1e-12, drift <= 1e-12));
  }
  report.seconds = seconds_since(t0);
  return report;
}

SuiteReport metrics_suite(std::size_t cases, double tolerance) {
  const auto t0 = Clock::now();
  SuiteReport report;
  report.suite = "metrics";
  std::map<std::string, double> worst;
  Rng rng(31);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t pairs = 1 + rng.uniform_index(4);
    std::vector<eval::Tokens> cands, refs;
    for (std::size_t p = 0; p < pairs; ++p) {
      cands.push_back(random_words(rng, 0, 12));
      refs.push_back(random_words(rng, 1, 12));
    }
    record_max(worst, "BLEU-1", std::abs(eval::corpus_bleu(cands, refs, 1) - naive_bleu(cands, refs, 1)));
    record_max(worst, "BLEU-4", std::abs(eval::corpus_bleu(cands, refs, 4) - naive_bleu(cands, refs, 4)));
    const auto r = eval::rouge_scores(cands[0], refs[0]);
    record_max(worst, "ROUGE-1", std::abs(r.rouge1 - naive_rouge1(cands[0], refs[0])));
    record_max(worst, "ROUGE-L", std::abs(r.rougeL - naive_rougeL(cands[0], refs[0])));
    record_max(worst, "Distinct-1", std::abs(eval::distinct_n(cands, 1) - naive_distinct(cands, 1)));
    record_max(worst, "Distinct-2", std::abs(eval::distinct_n(cands, 2) - naive_distinct(cands, 2)));
    const std::size_t n = 2 + rng.uniform_index(30);
    std::vector<std::size_t> pred(n), truth(n);
    const std::size_t kp = 1 + rng.uniform_index(4), kt = 1 + rng.uniform_index(4);
    for (std::size_t j = 0; j < n; ++j) {
      pred[j] = rng.uniform_index(kp);
      truth[j] = rng.uniform_index(kt);
    }
    record_max(worst, "ARI", std::abs(eval::adjusted_rand_index(pred, truth) - pair_counting_ari(pred, truth)));
    std::vector<double> a(n), b(n);
    for (std::size_t j = 0; j < n; ++j) {
      a[j] = rng.uniform();
      b[j] = rng.uniform();
    }
    record_max(worst, "RMSE", std::abs(eval::rmse(a, b) - two_pass_rmse(a, b)));
  }
  for (const auto& [name, err] : worst) {
    report.checks.push_back(
        make_check(name + " vs brute force", err, tolerance, err <= tolerance, std::to_string(cases) + " random cases"));
  }
  {
    const double got = eval::bleu_n({"the", "cat", "sat"}, {"the", "cat", "sat", "down"}, 1);
    const double want = std::exp(1.0 - 4.0 / 3.0);
    report.checks.push_back(make_check("BLEU-1 brevity example", std::abs(got - want), 1e-12,
                                       std::abs(got - want) <= 1e-12 && std::abs(got - 0.7165) < 5e-5,
                                       "score " + std::to_string(got)));
  }
  {
    const auto r = eval::rouge_scores({"a", "b", "c", "d"}, {"a", "c", "b", "d"});
    const double err = std::max(std::abs(r.rouge1 - 1.0), std::abs(r.rougeL - 0.75));
    report.checks.push_back(make_check("ROUGE-L LCS example", err, 1e-12, err <= 1e-12));
  }
  {
    const double one = eval::distinct_n({{"a", "b", "a", "b"}}, 1);
    const double pooled = eval::distinct_n({{"a", "b"}, {"a", "b"}}, 2);
    const double err = std::max(std::abs(one - 0.5), std::abs(pooled - 0.5));
    report.checks.push_back(make_check("Distinct pooling example", err, 1e-12, err <= 1e-12));
  }
  report.seconds = seconds_since(t0);
  return report;
}

SuiteReport decoupling_suite(std::size_t seeds) {
  const auto t0 = Clock::now();
  SuiteReport report;
  report.suite = "decoupling";
  double lm_max = 0.0, dec_max = 0.0;
  for (std::size_t seed = 1; seed <= seeds; ++seed) {
    TinySetup tiny = tiny_setup(100 + seed);
    auto& model = tiny.model;
    auto max_abs = [&](const std::string& prefix) {
      double m = 0.0;
      for (const auto& [name, p] : model.named_parameters()) {
        if (name.rfind(prefix, 0) != 0 || !p.has_grad()) continue;
        for (double g : p.node()->grad.values()) m = std::max(m, std::abs(g));
      }
      return m;
    };
    auto zero_all = [&] {
      for (auto& [name, p] : model.named_parameters()) {
        Var v = p;
        v.zero_grad();
      }
    };
    Rng r1(seed);
    zero_all();
    backward(training::stage2_objective(model, tiny.batch, 1.0, 0.1, r1).loss);
    lm_max = std::max(lm_max, max_abs("lm."));
    Rng r0(seed);
    zero_all();
    backward(training::stage2_objective(model, tiny.batch, 0.0, 0.1, r0).loss);
    dec_max = std::max(dec_max, max_abs("vae.decoder."));
    zero_all();
  }
  report.checks.push_back(make_check("alpha=1: language-model gradient", lm_max, 0.0, lm_max == 0.0));
  report.checks.push_back(make_check("alpha=0: rating-decoder gradient", dec_max, 0.0, dec_max == 0.0));
  report.seconds = seconds_since(t0);
  return report;
}

std::vector<std::string> suite_names() { return {"grads", "kl", "vae", "moe", "routing", "metrics", "decoupling"}; }

SuiteReport run_suite(const std::string& name) {
  if (name == "grads") return grad_suite();
  if (name == "kl") return kl_suite();
  if (name == "vae") return kl_reduction_suite();
  if (name == "moe") return moe_suite();
  if (name == "routing") return routing_suite();
  if (name == "metrics") return metrics_suite();
  if (name == "decoupling") return decoupling_suite();
  throw ConfigError("unknown verification suite '" + name + "'");
}

}  // namespace xmoe::oracles
