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

#include "xmoe/moe/transformer.hpp"

#include <cmath>
#include <numeric>

#include "xmoe/errors.hpp"
#include "xmoe/numerics/ops.hpp"

namespace xmoe::moe {

namespace {

Var scaled_normal(Rng& rng, Shape shape, double s) {
  Tensor t = sample_normal(rng, shape);
  for (auto& v : t.values()) v *= s;
  return Var::parameter(std::move(t));
}

Var ones(std::size_t n) { return Var::parameter(Tensor({n}, 1.0)); }

Var attention(const AttentionParams& p, const Var& x, std::size_t heads) {
  const std::size_t m = x.value().cols();
  const std::size_t hd = m / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Var xn = ops::rms_norm(x, p.norm);
  Var q = ops::matmul(xn, p.wq), k = ops::matmul(xn, p.wk), v = ops::matmul(xn, p.wv);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : ops::slice_cols(q, h * hd, (h + 1) * hd);
    Var kh = heads == 1 ? k : ops::slice_cols(k, h * hd, (h + 1) * hd);
    Var vh = heads == 1 ? v : ops::slice_cols(v, h * hd, (h + 1) * hd);
    Var a = ops::causal_softmax(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt));
    outs.push_back(ops::matmul(a, vh));
  }
  Var merged = heads == 1 ? outs[0] : ops::concat_cols(outs);
  return ops::matmul(merged, p.wo);
}

}  // namespace

LanguageModel::LanguageModel(const LmConfig& config, Rng& rng) : config_(config) {
  config.moe.validate();
  const std::size_t m = config.model_dim, v = config.vocab_size;
  if (v <= Vocab::kReserved) throw ConfigError("lm: vocabulary holds only reserved tokens");
  if (m == 0 || config.heads == 0 || m % config.heads != 0) {
    throw ConfigError("lm: model_dim must be a positive multiple of heads");
  }
  if (config.blocks == 0 || config.context == 0) throw ConfigError("lm: need at least one block and a context");
  const double s = 1.0 / std::sqrt(static_cast<double>(m));
  embed = scaled_normal(rng, {v, m}, 0.5);
  pos = scaled_normal(rng, {config.context, m}, 0.5);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    TransformerBlock block;
    block.attn.norm = ones(m);
    block.attn.wq = scaled_normal(rng, {m, m}, s);
    block.attn.wk = scaled_normal(rng, {m, m}, s);
    block.attn.wv = scaled_normal(rng, {m, m}, s);
    block.attn.wo = scaled_normal(rng, {m, m}, s / std::sqrt(2.0 * static_cast<double>(config.blocks)));
    block.moe_norm = ones(m);
    block.bank = ExpertBank::create(config.moe, m, rng);
    block.router = GateRouter::create(config.moe, m, rng);
    blocks.push_back(std::move(block));
  }
  final_norm = ones(m);
  head = scaled_normal(rng, {m, v}, s);
}

std::vector<std::pair<std::string, Var>> LanguageModel::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out{{"lm.embed", embed}, {"lm.pos", pos}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    const std::string pre = "lm.block" + std::to_string(b) + ".";
    out.emplace_back(pre + "attn.norm", blk.attn.norm);
    out.emplace_back(pre + "attn.wq", blk.attn.wq);
    out.emplace_back(pre + "attn.wk", blk.attn.wk);
    out.emplace_back(pre + "attn.wv", blk.attn.wv);
    out.emplace_back(pre + "attn.wo", blk.attn.wo);
    out.emplace_back(pre + "moe.norm", blk.moe_norm);
    for (std::size_t e = 0; e < blk.bank.experts.size(); ++e) {
      const auto& ex = blk.bank.experts[e];
      const std::string ep = pre + "moe.expert" + std::to_string(e) + ".";
      out.emplace_back(ep + "w1", ex.w1);
      out.emplace_back(ep + "b1", ex.b1);
      out.emplace_back(ep + "w2", ex.w2);
      out.emplace_back(ep + "b2", ex.b2);
    }
    for (std::size_t c = 0; c < blk.router.gates.size(); ++c) {
      out.emplace_back(pre + "router.gate" + std::to_string(c), blk.router.gates[c]);
    }
  }
  out.emplace_back("lm.norm", final_norm);
  out.emplace_back("lm.head", head);
  return out;
}

Var forward_lm(const LanguageModel& model, const std::vector<TokenId>& tokens, std::size_t gate, MoeStats* stats) {
  const auto& cfg = model.config();
  if (tokens.empty()) throw DimensionError("forward_lm: empty token sequence");
  if (tokens.size() > cfg.context) {
    throw ContextError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds context " +
                       std::to_string(cfg.context));
  }
  if (gate >= cfg.moe.gates) throw RoutingError("gate " + std::to_string(gate) + " outside model gates");
  std::vector<std::size_t> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var x = ops::add(ops::gather_rows(model.embed, tokens), ops::gather_rows(model.pos, positions));
  const MoeOptions moe_opts{cfg.moe.top_k, cfg.renormalize_topk, stats};
  for (const auto& block : model.blocks) {
    x = ops::add(x, attention(block.attn, x, cfg.heads));
    x = ops::add(x, moe_forward(block.bank, block.router, gate, ops::rms_norm(x, block.moe_norm), moe_opts));
  }
  return ops::matmul(ops::rms_norm(x, model.final_norm), model.head);
}

std::vector<TokenId> generate(const LanguageModel& model, const std::vector<TokenId>& prompt, std::size_t gate,
                              const GenerateOptions& options) {
  if (options.mode == DecodeMode::kSample && !(options.temperature > 0.0)) {
    throw ConfigError("generate: temperature must be positive");
  }
  NoGradGuard no_grad;
  Rng rng(options.seed);
  std::vector<TokenId> seq = prompt;
  std::vector<TokenId> out;
  const std::size_t vocab = model.config().vocab_size;
  while (out.size() < options.max_len && seq.size() < model.config().context) {
    Var logits = forward_lm(model, seq, gate);
    auto last = logits.value().values().subspan((seq.size() - 1) * vocab, vocab);
    TokenId next = 0;
    if (options.mode == DecodeMode::kGreedy) {
      for (TokenId t = 1; t < vocab; ++t)
        if (last[t] > last[next]) next = t;
    } else {
      double mx = last[0];
      for (double v : last) mx = std::max(mx, v);
      std::vector<double> p(vocab);
      double z = 0.0;
      for (std::size_t t = 0; t < vocab; ++t) z += p[t] = std::exp((last[t] - mx) / options.temperature);
      double u = rng.uniform() * z;
      next = vocab - 1;
      for (std::size_t t = 0; t < vocab; ++t) {
        u -= p[t];
        if (u < 0.0) {
          next = t;
          break;
        }
      }
    }
    if (next == Vocab::kEos) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

Var explanation_nll(const LanguageModel& model, const std::vector<TokenId>& prompt,
                    const std::vector<TokenId>& reference, std::size_t gate, MoeStats* stats) {
  if (reference.empty()) throw DataError("explanation_nll: empty reference");
  if (prompt.empty()) throw DataError("explanation_nll: empty prompt");
  std::vector<TokenId> input = prompt;
  input.insert(input.end(), reference.begin(), reference.end() - 1);
  Var logits = forward_lm(model, input, gate, stats);
  Var continuation = ops::slice_rows(logits, prompt.size() - 1, input.size());
  return ops::cross_entropy(continuation, reference);
}

}  // namespace xmoe::moe
