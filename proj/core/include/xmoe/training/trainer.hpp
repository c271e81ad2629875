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
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "xmoe/data/dataset.hpp"
#include "xmoe/training/model.hpp"

namespace xmoe::training {

struct StageConfig {
  int stage = 1;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-2;
  double beta = 0.1;   // KL weight
  double alpha = 0.1;  // ELBO share of the stage-2 loss
  std::size_t grad_accum_steps = 1;
  double clip_norm = 1.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool freeze_gmm = false;
  std::size_t warmup_epochs = 1;  // stage 1 only; K = 1 standard-normal prior
  std::size_t patience = 0;       // early stopping on validation loss; 0 disables

  void validate() const;

  static StageConfig desk_stage1();
  static StageConfig desk_stage2();
  /// Published settings, recorded in run manifests for reference.
  static StageConfig reference_stage1();
  static StageConfig reference_stage2();
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based within its phase
  std::string phase;      // "warmup", "stage1" or "stage2"
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double nll = 0.0;                      // stage 2 only
  double valid_loss = std::nan("");      // when validation records were given
  std::vector<std::size_t> occupancy;    // records per cluster at epoch end
  std::size_t steps = 0;                 // optimizer steps so far in this run
};

struct TrainHistory {
  std::vector<EpochLog> epochs;
  bool early_stopped = false;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Rating stage: warm-up epochs under a K = 1 standard-normal prior, k-means++
/// initialization of the mixture on the encoder means, then joint ELBO
/// training. Sets model.stage = 1.
TrainHistory train_stage1(Model& model, const std::vector<data::InteractionRecord>& train,
                          const StageConfig& config, const std::vector<data::InteractionRecord>* valid = nullptr,
                          const EpochCallback& on_epoch = {});

/// Explanation stage: per record, loss = alpha * ELBO + (1 - alpha) * NLL of
/// the reference under the gate of the record's cluster. Throws
/// SequencingError unless model.stage >= 1. Sets model.stage = 2.
TrainHistory train_stage2(Model& model, const std::vector<data::InteractionRecord>& train,
                          const StageConfig& config, const std::vector<data::InteractionRecord>* valid = nullptr,
                          const EpochCallback& on_epoch = {});

struct Stage2Options {
  vae::ElboOptions elbo;
  // Gate per record; computed from the encoder means when empty.
  std::vector<std::size_t> gates;
};

struct Stage2Terms {
  Var loss;  // alpha * ELBO + (1 - alpha) * mean NLL
  double elbo = 0.0, reconstruction = 0.0, kl = 0.0, nll = 0.0;
};

/// The explanation-stage objective on one micro-batch. With alpha = 1 the
/// language model is not run; with alpha = 0 the ELBO is not evaluated.
Stage2Terms stage2_objective(const Model& model, const std::vector<data::InteractionRecord>& batch, double alpha,
                             double beta, Rng& rng, const Stage2Options& options = {});

/// Mean stage-2 loss over `records` with zero-noise latents (no graph).
double stage2_loss(const Model& model, const std::vector<data::InteractionRecord>& records, double alpha,
                   double beta);

/// Mean stage-1 ELBO over `records` with zero-noise latents (no graph).
double stage1_loss(const Model& model, const std::vector<data::InteractionRecord>& records, double beta);

/// Records per cluster.
std::vector<std::size_t> occupancy(const Model& model, const std::vector<data::InteractionRecord>& records);

}  // namespace xmoe::training
