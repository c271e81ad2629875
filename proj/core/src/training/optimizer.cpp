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

#include "xmoe/training/optimizer.hpp"

#include <cmath>

#include "xmoe/errors.hpp"

namespace xmoe::training {

AdamW::AdamW(NamedParams params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0)) throw ConfigError("adamw: learning rate must be positive");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw ConfigError("adamw: betas must lie in [0, 1)");
  }
  if (config_.weight_decay < 0.0) throw ConfigError("adamw: weight decay must be non-negative");
  for (const auto& [name, p] : params_) {
    if (!p.defined() || !p.requires_grad()) throw ConfigError("adamw: parameter " + name + " is not trainable");
    state_.m.emplace_back(p.shape());
    state_.v.emplace_back(p.shape());
  }
}

void AdamW::step() {
  for (const auto& [name, p] : params_) {
    if (p.has_grad() && !p.node()->grad.all_finite()) {
      throw TrainingError("non-finite gradient in parameter " + name);
    }
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i].second;
    auto value = p.mutable_value().values();
    auto m = state_.m[i].values();
    auto v = state_.v[i].values();
    const bool has = p.has_grad();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = has ? p.node()->grad[j] : 0.0;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
      value[j] -= config_.lr * (update + config_.weight_decay * value[j]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

double global_grad_norm(const NamedParams& params) {
  double s = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.node()->grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

void scale_grads(const NamedParams& params, double factor) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.node()->grad.values()) g *= factor;
  }
}

double clip_grad_norm(const NamedParams& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double scale = max_norm / norm;
  scale_grads(params, scale);
  return scale;
}

double clip_grad_norm(const std::vector<Tensor*>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be positive");
  double s = 0.0;
  for (const Tensor* g : grads)
    for (double x : g->values()) s += x * x;
  const double norm = std::sqrt(s);
  if (!(norm > max_norm)) return 1.0;
  const double scale = max_norm / norm;
  for (Tensor* g : grads)
    for (double& x : g->values()) x *= scale;
  return scale;
}

}  // namespace xmoe::training
