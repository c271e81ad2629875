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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xmoe/numerics/autodiff.hpp"

namespace xmoe::training {

using NamedParams = std::vector<std::pair<std::string, Var>>;

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  std::vector<Tensor> m;  // first moments, one per parameter
  std::vector<Tensor> v;  // second moments
  std::uint64_t step = 0;
};

/// Adam with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
class AdamW {
 public:
  AdamW(NamedParams params, AdamWConfig config);

  /// One update from the accumulated gradients. Parameters without a
  /// gradient see a zero gradient. Throws TrainingError naming the first
  /// parameter whose gradient is not finite; nothing is updated then.
  void step();
  void zero_grad();

  const NamedParams& params() const noexcept { return params_; }
  const OptimizerState& state() const noexcept { return state_; }
  const AdamWConfig& config() const noexcept { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  NamedParams params_;
  AdamWConfig config_;
  OptimizerState state_;
};

/// Global L2 norm over every gradient in `params`.
double global_grad_norm(const NamedParams& params);

/// Scales all gradients by max_norm / g when the global norm g exceeds
/// max_norm and returns the scale (1 otherwise). Throws ConfigError when
/// max_norm <= 0.
double clip_grad_norm(const NamedParams& params, double max_norm);

/// Same rule over bare gradient tensors.
double clip_grad_norm(const std::vector<Tensor*>& grads, double max_norm);

/// Multiplies every accumulated gradient by `factor`.
void scale_grads(const NamedParams& params, double factor);

}  // namespace xmoe::training
