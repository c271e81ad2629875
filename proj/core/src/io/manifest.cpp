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

#include "xmoe/io/manifest.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xmoe/errors.hpp"
#include "xmoe/io/checkpoint.hpp"

namespace xmoe::io {

namespace {

using json = nlohmann::ordered_json;

json stage_json(const training::StageConfig& c) {
  json j;
  j["stage"] = c.stage;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  if (c.stage == 1) j["beta"] = c.beta;
  if (c.stage == 2) {
    j["alpha"] = c.alpha;
    j["beta"] = c.beta;
  }
  j["grad_accum_steps"] = c.grad_accum_steps;
  j["clip_norm"] = c.clip_norm;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  j["freeze_gmm"] = c.freeze_gmm;
  if (c.stage == 1) j["warmup_epochs"] = c.warmup_epochs;
  j["patience"] = c.patience;
  return j;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string stage_config_json(const training::StageConfig& config) { return stage_json(config).dump(2); }

std::string run_manifest_json(const RunManifest& m) {
  json j;
  j["stage"] = m.stage;
  j["seed"] = m.seed;
  j["dataset"] = m.dataset;
  j["checkpoint"] = m.checkpoint;
  if (!m.parent_checkpoint.empty()) j["parent_checkpoint"] = m.parent_checkpoint;
  j["records"] = {{"train", m.train_records}, {"valid", m.valid_records}, {"test", m.test_records}};
  j["model"] = json::parse(model_config_json(m.model));
  j["gates"] = m.model.clusters;
  j["config"] = stage_json(m.config);
  json epochs = json::array();
  for (const auto& e : m.history.epochs) {
    json row;
    row["phase"] = e.phase;
    row["epoch"] = e.epoch;
    row["loss"] = number_or_null(e.loss);
    row["reconstruction"] = number_or_null(e.reconstruction);
    row["kl"] = number_or_null(e.kl);
    if (e.phase == "stage2") row["nll"] = number_or_null(e.nll);
    row["valid_loss"] = number_or_null(e.valid_loss);
    row["occupancy"] = e.occupancy;
    row["steps"] = e.steps;
    epochs.push_back(row);
  }
  j["epochs"] = epochs;
  j["early_stopped"] = m.history.early_stopped;
  j["optimizer_steps"] = m.history.steps;
  j["wall_seconds"] = m.wall_seconds;
  j["reference_protocol"] = {
      {"stage1", stage_json(training::StageConfig::reference_stage1())},
      {"stage2", stage_json(training::StageConfig::reference_stage2())},
      {"embedding_dim", 768},
      {"latent_dim", 128},
      {"base_experts", 6},
      {"base_hidden", 4096},
      {"factor", 2},
      {"top_k", 2},
  };
  return j.dump(2);
}

void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write run manifest " + path.string());
  out << run_manifest_json(manifest) << '\n';
  if (!out) throw IoError("failed writing run manifest " + path.string());
}

}  // namespace xmoe::io
