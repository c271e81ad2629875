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

#include <optional>
#include <string>
#include <vector>

#include "xmoe/data/dataset.hpp"
#include "xmoe/training/model.hpp"

namespace xmoe::eval {

struct EvalOptions {
  bool buckets = false;
  std::size_t threads = 1;
  moe::GenerateOptions generate;
  bool sentence_bleu = false;      // mean of per-pair BLEU instead of corpus BLEU
  bool distinct_per_sentence = false;
};

struct GeneratedOutput {
  std::string prompt;     // prompt tokens joined by spaces
  std::string text;       // generated explanation
  std::size_t gate = 0;
  double rating = 0.0;    // predicted normalized rating
  double target = 0.0;    // true normalized rating
};

struct MetricRow {
  std::string name;  // "all", "ds1", "ds2", "ds3"
  std::size_t pairs = 0;
  double bleu1 = 0, bleu4 = 0, rouge1 = 0, rougeL = 0, distinct1 = 0, distinct2 = 0;  // raw, in [0, 1]
  double rmse = 0;
  std::size_t min_user_frequency = 0, max_user_frequency = 0;  // bucket rows only
};

struct MetricReport {
  MetricRow overall;
  std::vector<MetricRow> buckets;
  std::optional<double> bucket_bleu4_ratio;  // ds3 / ds1, when ds1 BLEU-4 > 0
  std::string bleu_mode = "corpus";
  std::string distinct_mode = "corpus";
  // Model provenance; zero when scoring bare outputs.
  std::size_t clusters = 0;
  std::size_t gates = 0;
  std::size_t experts = 0;
  std::size_t top_k = 0;
  int stage = 0;
  std::vector<std::size_t> gate_histogram;
};

/// Greedy (or sampled) explanations and rating predictions for every record,
/// in record order. With threads > 1 records are spread over workers; the
/// result does not depend on the thread count.
std::vector<GeneratedOutput> generate_outputs(const training::Model& model,
                                              const std::vector<data::InteractionRecord>& records,
                                              const EvalOptions& options);

/// Metrics of `outputs` against the records' references. Buckets need
/// `train` for user frequencies.
MetricReport score_outputs(const std::vector<data::InteractionRecord>& records,
                           const std::vector<GeneratedOutput>& outputs,
                           const std::vector<data::InteractionRecord>* train, const EvalOptions& options);

/// Throws SequencingError before the explanation stage and DataError for an
/// empty record list.
MetricReport evaluate_model(const training::Model& model, const std::vector<data::InteractionRecord>& test,
                            const std::vector<data::InteractionRecord>* train, const EvalOptions& options,
                            std::vector<GeneratedOutput>* outputs = nullptr);

/// Machine-readable report; text metrics as percentages (x100).
std::string report_json(const MetricReport& report);
/// Aligned columns, one row per metric row.
std::string report_table(const MetricReport& report);
/// JSONL lines of prompt, generated, reference and gate.
std::string records_jsonl(const std::vector<data::InteractionRecord>& records,
                          const std::vector<GeneratedOutput>& outputs);

}  // namespace xmoe::eval
