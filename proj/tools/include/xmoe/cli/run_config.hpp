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

// Run configuration: a TOML file of `key = value` settings grouped in
// [model], [stage1], [stage2] and [synth] tables, with `--section.key value`
// flags layered on top.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xmoe/data/dataset.hpp"
#include "xmoe/training/model.hpp"
#include "xmoe/training/trainer.hpp"

namespace xmoe::cli {

struct RunConfig {
  std::uint64_t seed = 42;  // root of every substream
  training::ModelConfig model;
  training::StageConfig stage1 = training::StageConfig::desk_stage1();
  training::StageConfig stage2 = training::StageConfig::desk_stage2();
  data::SynthSpec synth;
  // Gate count of the explanation model; when given it must equal
  // model.clusters.
  std::optional<std::size_t> gates;

  std::string dataset;
  std::string out;
  std::string init;    // stage-1 checkpoint for stage 2
  std::string labels;  // optional user -> cluster sidecar
  bool f64_checkpoint = false;
  std::size_t threads = 1;

  /// Throws ConfigError; runs before any data is read.
  void validate() const;
};

struct Setting {
  std::string key;  // "seed", "model.clusters", "stage1.lr", ...
  std::string help;
  bool list = false;  // accepts several values
};

/// Every key understood by config files and override flags.
const std::vector<Setting>& settings();

/// Sets one field from its textual value(s). ConfigError names the key on an
/// unknown key or a value that does not parse.
void apply_setting(RunConfig& config, const std::string& key, const std::vector<std::string>& values);

/// Reads a TOML config file and applies every entry in file order.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "config");

/// Seed handed to split_records for a given root seed.
std::uint64_t data_seed(std::uint64_t root_seed);

/// Loads a dataset and splits it the same way every command does.
data::DatasetSplit load_split(const std::filesystem::path& dataset, std::uint64_t root_seed);

}  // namespace xmoe::cli
