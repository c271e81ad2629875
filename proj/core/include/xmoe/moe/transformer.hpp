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

#include "xmoe/moe/moe_layer.hpp"
#include "xmoe/moe/vocab.hpp"

namespace xmoe::moe {

struct LmConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t context = 64;
  MoeLayerConfig moe;
  bool renormalize_topk = false;
};

struct AttentionParams {
  Var norm;            // (m) pre-norm gain
  Var wq, wk, wv, wo;  // (m x m)
};

/// Pre-norm block: x += attn(norm(x)); x += moe(norm(x)).
struct TransformerBlock {
  AttentionParams attn;
  Var moe_norm;
  ExpertBank bank;
  GateRouter router;
};

/// Decoder-only language model whose feed-forward sublayers are gated
/// mixtures of experts. All blocks share one gate index per sequence.
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(const LmConfig& config, Rng& init_rng);

  const LmConfig& config() const noexcept { return config_; }

  Var embed;  // (V x m)
  Var pos;    // (context x m)
  std::vector<TransformerBlock> blocks;
  Var final_norm;
  Var head;  // (m x V)

  /// lm.embed, lm.pos, lm.block{b}.attn.*, lm.block{b}.moe.expert{e}.*,
  /// lm.block{b}.router.gate{c}, lm.norm, lm.head
  std::vector<std::pair<std::string, Var>> named_parameters() const;

 private:
  LmConfig config_;
};

/// Next-token logits (T x V) for every position. Throws ContextError past the
/// context window and RoutingError for an unknown gate.
Var forward_lm(const LanguageModel& model, const std::vector<TokenId>& tokens, std::size_t gate,
               MoeStats* stats = nullptr);

enum class DecodeMode { kGreedy, kSample };

struct GenerateOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_len = 32;
};

/// Continues the prompt until EOS, max_len new tokens, or the context limit.
/// The returned tokens exclude EOS. Greedy ties pick the lowest id.
std::vector<TokenId> generate(const LanguageModel& model, const std::vector<TokenId>& prompt, std::size_t gate,
                              const GenerateOptions& options);

/// Mean cross-entropy of `reference` given `prompt` under teacher forcing.
/// The caller appends EOS to `reference` when the stop token should be learned.
Var explanation_nll(const LanguageModel& model, const std::vector<TokenId>& prompt,
                    const std::vector<TokenId>& reference, std::size_t gate, MoeStats* stats = nullptr);

}  // namespace xmoe::moe
