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

#include "xmoe/moe/moe_layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "xmoe/errors.hpp"
#include "xmoe/numerics/ops.hpp"

namespace xmoe::moe {

void MoeLayerConfig::validate() const {
  if (factor == 0) throw ConfigError("moe: decomposition factor r must be >= 1");
  if (base_experts == 0 || base_hidden == 0) throw ConfigError("moe: need at least one expert of positive width");
  if (base_hidden % factor != 0) {
    throw ConfigError("moe: factor r=" + std::to_string(factor) + " does not divide hidden width d=" +
                      std::to_string(base_hidden));
  }
  if (top_k < 1 || top_k > expert_count()) {
    throw ConfigError("moe: k=" + std::to_string(top_k) + " outside [1, " + std::to_string(expert_count()) + "]");
  }
  if (gates == 0) throw ConfigError("moe: need at least one gate");
}

MoeLayerConfig decompose_experts(std::size_t base_experts, std::size_t base_hidden, std::size_t factor,
                                 std::size_t top_k, std::size_t gates) {
  MoeLayerConfig cfg{base_experts, base_hidden, factor, top_k, gates};
  cfg.validate();
  if (cfg.expert_count() * cfg.expert_hidden() != base_experts * base_hidden) {
    throw ConfigError("moe: decomposition does not preserve N*d");
  }
  return cfg;
}

std::size_t expert_weight_count(const MoeLayerConfig& config, std::size_t model_dim) {
  return config.expert_count() * 2 * model_dim * config.expert_hidden();
}

std::size_t undecomposed_weight_count(std::size_t base_experts, std::size_t base_hidden, std::size_t model_dim) {
  return base_experts * 2 * model_dim * base_hidden;
}

std::size_t expert_bias_count(const MoeLayerConfig& config, std::size_t model_dim) {
  return config.expert_count() * (config.expert_hidden() + model_dim);
}

namespace {
Var scaled_normal(Rng& rng, Shape shape, double s) {
  Tensor t = sample_normal(rng, shape);
  for (auto& v : t.values()) v *= s;
  return Var::parameter(std::move(t));
}
}  // namespace

ExpertBank ExpertBank::create(const MoeLayerConfig& config, std::size_t model_dim, Rng& rng) {
  config.validate();
  const std::size_t h = config.expert_hidden();
  ExpertBank bank;
  bank.experts.reserve(config.expert_count());
  for (std::size_t e = 0; e < config.expert_count(); ++e) {
    Expert ex;
    ex.w1 = scaled_normal(rng, {model_dim, h}, 1.0 / std::sqrt(static_cast<double>(model_dim)));
    ex.b1 = Var::parameter(Tensor({h}));
    ex.w2 = scaled_normal(rng, {h, model_dim}, 1.0 / std::sqrt(static_cast<double>(h)));
    ex.b2 = Var::parameter(Tensor({model_dim}));
    bank.experts.push_back(std::move(ex));
  }
  return bank;
}

GateRouter GateRouter::create(const MoeLayerConfig& config, std::size_t model_dim, Rng& rng) {
  config.validate();
  GateRouter router;
  for (std::size_t c = 0; c < config.gates; ++c) {
    router.gates.push_back(
        scaled_normal(rng, {model_dim, config.expert_count()}, 1.0 / std::sqrt(static_cast<double>(model_dim))));
  }
  return router;
}

Var route(const GateRouter& router, std::size_t gate, const Var& x) {
  if (gate >= router.gates.size()) {
    throw RoutingError("gate " + std::to_string(gate) + " outside [0, " + std::to_string(router.gates.size()) + ")");
  }
  const bool single = x.value().rank() == 1;
  Var rows = single ? ops::reshape(x, {1, x.value().size()}) : x;
  Var scores = ops::softmax(ops::matmul(rows, router.gates[gate]));
  return single ? ops::reshape(scores, {scores.value().size()}) : scores;
}

std::vector<std::size_t> top_k_select(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) throw ConfigError("top_k_select: k exceeds the number of scores");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(k);
  return idx;
}

Var expert_forward(const Expert& expert, const Var& x) {
  Var h = ops::gelu(ops::add_row_vector(ops::matmul(x, expert.w1), expert.b1));
  return ops::add_row_vector(ops::matmul(h, expert.w2), expert.b2);
}

Var moe_forward(const ExpertBank& bank, const GateRouter& router, std::size_t gate, const Var& x,
                const MoeOptions& options) {
  const bool single = x.value().rank() == 1;
  Var rows = single ? ops::reshape(x, {1, x.value().size()}) : x;
  const std::size_t t_count = rows.value().rows();
  const std::size_t experts = bank.experts.size();
  const std::size_t k = options.top_k;
  if (k < 1 || k > experts) throw ConfigError("moe_forward: k outside [1, expert count]");

  Var scores = route(router, gate, rows);  // (T x E)
  if (scores.value().cols() != experts) throw DimensionError("moe_forward: router width differs from expert count");

  std::vector<std::vector<std::size_t>> tokens_of(experts);
  std::vector<std::vector<std::size_t>> selected(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    selected[t] = top_k_select(scores.value().values().subspan(t * experts, experts), k);
    for (std::size_t e : selected[t]) tokens_of[e].push_back(t);
  }

  Var inv_total;
  if (options.renormalize) {
    std::vector<std::size_t> flat;
    for (std::size_t t = 0; t < t_count; ++t)
      for (std::size_t e : selected[t]) flat.push_back(t * experts + e);
    Var totals = ops::sum_rows(ops::reshape(ops::pick(scores, flat), {t_count, k}));
    inv_total = ops::exp(ops::neg(ops::log(totals)));
  }

  Var y;
  for (std::size_t e = 0; e < experts; ++e) {
    const auto& toks = tokens_of[e];
    if (toks.empty()) continue;
    Var out = expert_forward(bank.experts[e], ops::gather_rows(rows, toks));
    std::vector<std::size_t> flat(toks.size());
    for (std::size_t j = 0; j < toks.size(); ++j) flat[j] = toks[j] * experts + e;
    Var weight = ops::pick(scores, flat);
    if (options.renormalize) weight = ops::mul(weight, ops::pick(inv_total, toks));
    Var contribution = ops::scatter_rows(ops::row_scale(out, weight), toks, t_count);
    y = y.defined() ? ops::add(y, contribution) : contribution;
    if (options.stats) options.stats->expert_evaluations += toks.size();
  }
  if (options.stats) options.stats->tokens_routed += t_count;
  return single ? ops::reshape(y, {x.value().size()}) : y;
}

}  // namespace xmoe::moe
