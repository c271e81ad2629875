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

// Verification sweeps shared by `xmoe verify` and the acceptance binary.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmoe/data/dataset.hpp"
#include "xmoe/training/model.hpp"

namespace xmoe::oracles {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;  // measured quantity (error, count, ...)
  double limit = 0.0;  // threshold it was held to
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
  std::size_t failures() const;
  /// Check with the largest value/limit ratio.
  const Check* worst() const;
};

/// Every differentiable op, plus the full rating-stage and explanation-stage
/// losses on a 4-record micro-batch, for `seeds` seeds.
SuiteReport grad_suite(std::size_t seeds = 20, double h = 1e-5, double tolerance = 1e-4);

/// Closed-form mixture KL against Monte Carlo on 10 configurations
/// (K in {1,2,3,5}, D in {2,8}), within 3 standard errors.
SuiteReport kl_suite(std::size_t samples = 100000);

/// K = 1 standard-normal prior against the textbook VAE KL on `cases` draws.
SuiteReport kl_reduction_suite(std::size_t cases = 100, double tolerance = 1e-10);

/// Expert-count identity for (6, 4096, 2) and 5 random configs; dense
/// equivalence with one gate and k = rN.
SuiteReport moe_suite(double tolerance = 1e-9);

/// Exactly k experts per token under the default config; shift invariance of
/// top-k selection and cluster argmax.
SuiteReport routing_suite();

/// Metric implementations against brute-force references on `cases` random
/// pairs each, plus the three worked examples.
SuiteReport metrics_suite(std::size_t cases = 50, double tolerance = 1e-9);

/// alpha = 1 leaves language-model gradients at exactly zero; alpha = 0 does
/// the same for the rating decoder.
SuiteReport decoupling_suite(std::size_t seeds = 3);

/// Names accepted by run_suite: grads, kl, vae, moe, routing, metrics, decoupling.
std::vector<std::string> suite_names();
SuiteReport run_suite(const std::string& name);

/// Small corpus and model used by the gradient and decoupling sweeps.
struct TinySetup {
  data::DatasetSplit split;
  training::Model model;
  std::vector<data::InteractionRecord> batch;  // 4 training records
};
TinySetup tiny_setup(std::uint64_t seed, bool attention_encoder = false);

}  // namespace xmoe::oracles
