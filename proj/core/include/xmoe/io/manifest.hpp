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

#include <filesystem>
#include <string>

#include "xmoe/training/trainer.hpp"

namespace xmoe::io {

/// Everything recorded next to a checkpoint after a training run.
struct RunManifest {
  int stage = 1;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string checkpoint;
  std::string parent_checkpoint;  // stage 2 only
  training::ModelConfig model;
  training::StageConfig config;
  training::TrainHistory history;
  std::size_t train_records = 0;
  std::size_t valid_records = 0;
  std::size_t test_records = 0;
  double wall_seconds = 0.0;
};

/// JSON text with the run fields, per-epoch losses and occupancy histograms,
/// and a "reference_protocol" block holding the published stage settings.
std::string run_manifest_json(const RunManifest& manifest);
void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest);

std::string stage_config_json(const training::StageConfig& config);

}  // namespace xmoe::io
