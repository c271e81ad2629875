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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xmoe/numerics/autodiff.hpp"
#include "xmoe/numerics/rng.hpp"

namespace xmoe::moe {

/// Fine-grained expert layout: N base experts of hidden width d split by a
/// factor r into r*N experts of width d/r, so expert weight counts match
/// the undecomposed layer exactly. One router per gate (= per cluster).
struct MoeLayerConfig {
  std::size_t base_experts = 6;   // N
  std::size_t base_hidden = 128;  // d
  std::size_t factor = 2;         // r
  std::size_t top_k = 2;          // k
  std::size_t gates = 3;          // K_gates, equals the prior's cluster count

  std::size_t expert_count() const noexcept { return factor * base_experts; }
  std::size_t expert_hidden() const noexcept { return base_hidden / factor; }
  void validate() const;
};

/// Throws ConfigError if r is 0 or does not divide d, or k is out of range.
MoeLayerConfig decompose_experts(std::size_t base_experts, std::size_t base_hidden, std::size_t factor,
                                 std::size_t top_k = 2, std::size_t gates = 1);

/// Weight (non-bias) parameters across all experts of the layer for a given
/// model width: expert_count * 2 * model_dim * expert_hidden.
std::size_t expert_weight_count(const MoeLayerConfig& config, std::size_t model_dim);
/// Same count for N undecomposed experts of width d.
std::size_t undecomposed_weight_count(std::size_t base_experts, std::size_t base_hidden, std::size_t model_dim);
/// Biases: expert_count * (expert_hidden + model_dim). Unlike weights these
/// grow with r, by (r - 1) * N * model_dim.
std::size_t expert_bias_count(const MoeLayerConfig& config, std::size_t model_dim);

struct Expert {
  Var w1, b1;  // (m x h), (h)
  Var w2, b2;  // (h x m), (m)
};

struct ExpertBank {
  std::vector<Expert> experts;
  static ExpertBank create(const MoeLayerConfig& config, std::size_t model_dim, Rng& rng);
};

struct GateRouter {
  std::vector<Var> gates;  // one (m x r*N) matrix per gate
  static GateRouter create(const MoeLayerConfig& config, std::size_t model_dim, Rng& rng);
};

/// Instrumentation for expert evaluations.
struct MoeStats {
  std::size_t tokens_routed = 0;
  std::size_t expert_evaluations = 0;  // (token, expert) pairs actually run
};

struct MoeOptions {
  std::size_t top_k = 2;
  bool renormalize = false;  // divide selected scores by their sum
  MoeStats* stats = nullptr;
};

/// softmax(x . W_gate) over all r*N experts. x is (m) or (T x m); the result
/// is (r*N) or (T x r*N). Throws RoutingError for an unknown gate.
Var route(const GateRouter& router, std::size_t gate, const Var& x);

/// Indices of the k largest scores, ordered by score descending and then
/// by index ascending.
std::vector<std::size_t> top_k_select(std::span<const double> scores, std::size_t k);

/// One expert on rows of x: gelu(x W1 + b1) W2 + b2.
Var expert_forward(const Expert& expert, const Var& x);

/// y_t = sum over the top-k experts i of token t of score_t,i * E_i(x_t).
/// Unselected experts are never evaluated; the softmax is over all experts so
/// every routing logit receives gradient.
Var moe_forward(const ExpertBank& bank, const GateRouter& router, std::size_t gate, const Var& x,
                const MoeOptions& options);

}  // namespace xmoe::moe
