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
#include <vector>

#include "xmoe/data/dataset.hpp"
#include "xmoe/moe/transformer.hpp"
#include "xmoe/moe/vocab.hpp"
#include "xmoe/training/optimizer.hpp"
#include "xmoe/vae/vae_gmm.hpp"

namespace xmoe::training {

/// Architecture knobs. Table sizes and the vocabulary size come from data.
struct ModelConfig {
  std::size_t embedding_dim = 32;
  std::size_t latent_dim = 8;
  std::size_t encoder_hidden = 64;
  std::size_t decoder_hidden = 32;
  std::size_t clusters = 3;
  vae::EncoderKind encoder = vae::EncoderKind::kMlp;

  std::size_t model_dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t context = 64;
  std::size_t base_experts = 6;    // N
  std::size_t base_hidden = 128;   // d
  std::size_t factor = 2;          // r
  std::size_t top_k = 2;           // k
  bool renormalize_topk = false;

  double rating_max = 5.0;
  std::size_t max_explanation = 32;

  void validate() const;
};

/// Everything a checkpoint holds. `stage` is 0 before training, 1 after the
/// rating stage and 2 after the explanation stage.
struct Model {
  ModelConfig config;
  data::IdMap users;
  data::IdMap items;
  moe::Vocab vocab;
  vae::VaeGmm vae;
  moe::LanguageModel lm;
  int stage = 0;
  std::uint64_t seed = 0;

  NamedParams named_parameters() const;
};

/// Reserved tokens, user/item tokens for every mapped id, rating tokens
/// r1..r<max>, then feature and explanation tokens of the training records
/// in first-seen order.
moe::Vocab build_vocab(const std::vector<data::InteractionRecord>& train, const data::IdMap& users,
                       const data::IdMap& items, double rating_max);

/// Fresh model with parameters drawn from the "init" substream of `seed`.
Model build_model(const ModelConfig& config, const data::DatasetSplit& split, std::uint64_t seed);

/// Table-index batch with ratings divided by rating_max. Throws DataError for
/// ratings above rating_max.
vae::RatingBatch make_rating_batch(const Model& model, const std::vector<data::InteractionRecord>& records,
                                   std::span<const std::size_t> indices);
vae::RatingBatch make_rating_batch(const Model& model, const std::vector<data::InteractionRecord>& records);

moe::PromptInput prompt_input(const Model& model, const data::InteractionRecord& record);
std::vector<moe::TokenId> prompt_tokens(const Model& model, const data::InteractionRecord& record);
/// Explanation tokens, truncated to max_explanation, followed by EOS.
std::vector<moe::TokenId> reference_tokens(const Model& model, const data::InteractionRecord& record);

/// Deterministic gate for a record: cluster of the encoder mean.
std::size_t record_gate(const Model& model, const data::InteractionRecord& record);

/// Encoder means (N x D) for every record, computed without a graph.
Tensor encoder_means(const Model& model, const std::vector<data::InteractionRecord>& records);

/// Cluster index of every record under the model's prior.
std::vector<std::size_t> record_clusters(const Model& model, const std::vector<data::InteractionRecord>& records);

/// Majority vote of record clusters per user (ties to the lower cluster),
/// returned in the order of `users`.
std::vector<std::size_t> user_clusters(const Model& model, const std::vector<data::InteractionRecord>& records,
                                       const std::vector<std::string>& users);

}  // namespace xmoe::training
