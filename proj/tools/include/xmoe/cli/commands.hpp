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

// Subcommand bodies. Each throws an xmoe::Error subclass on failure; run()
// in app.hpp turns those into exit codes.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xmoe/cli/run_config.hpp"
#include "xmoe/moe/transformer.hpp"

namespace xmoe::cli {

/// Writes the corpus to config.out and the label sidecar to config.labels
/// (default "<out>.labels.tsv"); prints a statistics table.
void cmd_synth(const RunConfig& config, std::ostream& out);

/// Stage 1 builds a model from config.dataset; stage 2 continues config.init.
/// Writes config.out and "<out>.manifest.json".
void cmd_train(const RunConfig& config, int stage, std::ostream& out, std::ostream& err);

struct GenerateRequest {
  std::filesystem::path checkpoint;
  std::string user;
  std::string item;
  std::optional<double> rating;  // decoder prediction when absent
  std::vector<std::string> features;
  moe::GenerateOptions options;
};
void cmd_generate(const GenerateRequest& request, std::ostream& out, std::ostream& err);

struct EvaluateRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  bool buckets = false;
  std::size_t threads = 1;
  bool sentence_bleu = false;
  bool distinct_per_sentence = false;
  std::filesystem::path json;  // report file; "<checkpoint>.report.json" when empty
  std::filesystem::path dump;  // per-record JSONL, optional
};
void cmd_evaluate(const EvaluateRequest& request, std::ostream& out);

struct InspectRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  std::filesystem::path labels;  // optional
  std::filesystem::path pca_csv;  // optional
};

struct ClusterInspection {
  std::vector<std::size_t> occupancy;          // records per cluster
  std::vector<double> pi;
  std::vector<double> intra_distance;          // mean member distance to its component mean; NaN if empty
  std::vector<std::vector<double>> centroid_distance;  // between component means
  std::optional<double> ari;                   // users, against the sidecar
  std::optional<double> purity;
  std::size_t labelled_users = 0;
};

ClusterInspection inspect_clusters(const training::Model& model, const std::vector<data::InteractionRecord>& records,
                                   const std::map<std::string, std::size_t>* labels);

/// First two principal components of the rows of `points` (N x D), N x 2.
/// Signs are fixed so the largest-magnitude loading of each axis is positive.
Tensor pca_2d(const Tensor& points);

void cmd_inspect_clusters(const InspectRequest& request, std::ostream& out);

/// Returns true when every selected suite passed.
bool cmd_verify(const std::vector<std::string>& suites, bool verbose, std::ostream& out);

}  // namespace xmoe::cli
