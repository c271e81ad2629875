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

#include <benchmark/benchmark.h>

#include "xmoe/moe/moe_layer.hpp"
#include "xmoe/moe/transformer.hpp"
#include "xmoe/numerics/autodiff.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/vae/vae_gmm.hpp"

namespace {

using namespace xmoe;

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Var a = Var::parameter(random_tensor({n, n}, rng)), b = Var::parameter(random_tensor({n, n}, rng));
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b).value().values().data());
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Var a = Var::parameter(random_tensor({n, n}, rng)), b = Var::parameter(random_tensor({n, n}, rng));
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    backward(ops::sum(ops::matmul(a, b)));
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

// Default desk layer: N=6, d=128, r=2 -> 12 experts of width 64, top-2.
void BM_MoeForward(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  const std::size_t m = 64;
  Rng rng(3);
  const auto cfg = moe::decompose_experts(6, 128, 2, 2, 3);
  const auto bank = moe::ExpertBank::create(cfg, m, rng);
  const auto router = moe::GateRouter::create(cfg, m, rng);
  const Var x = Var::constant(random_tensor({tokens, m}, rng));
  moe::MoeOptions opts;
  opts.top_k = cfg.top_k;
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(moe::moe_forward(bank, router, 1, x, opts).value().values().data());
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(tokens));
}
BENCHMARK(BM_MoeForward)->Arg(16)->Arg(64);

moe::LanguageModel desk_lm(std::size_t vocab) {
  moe::LmConfig cfg;
  cfg.vocab_size = vocab;
  cfg.moe = moe::decompose_experts(6, 128, 2, 2, 3);
  Rng rng(4);
  return moe::LanguageModel(cfg, rng);
}

void BM_ForwardLm(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto lm = desk_lm(200);
  std::vector<moe::TokenId> tokens(len);
  for (std::size_t i = 0; i < len; ++i) tokens[i] = static_cast<moe::TokenId>(5 + (7 * i) % 190);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(moe::forward_lm(lm, tokens, 0).value().values().data());
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(len));
}
BENCHMARK(BM_ForwardLm)->Arg(16)->Arg(48);

void BM_ExplanationNllBackward(benchmark::State& state) {
  const auto lm = desk_lm(200);
  const std::vector<moe::TokenId> prompt = {5, 9, 12, 40, 41}, reference = {60, 61, 62, 63, 64, 65, 66, 67, 68, 69};
  for (auto _ : state) backward(moe::explanation_nll(lm, prompt, reference, 2));
}
BENCHMARK(BM_ExplanationNllBackward);

void BM_ElboStep(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  vae::VaeConfig cfg;
  cfg.user_rows = 301;
  cfg.item_rows = 101;
  cfg.embedding_dim = 32;
  cfg.latent_dim = 8;
  cfg.encoder_hidden = 64;
  cfg.decoder_hidden = 32;
  cfg.clusters = 3;
  Rng rng(5);
  const vae::VaeGmm model(cfg, rng);
  vae::RatingBatch batch;
  for (std::size_t i = 0; i < batch_size; ++i) {
    batch.users.push_back(1 + rng.uniform_index(300));
    batch.items.push_back(1 + rng.uniform_index(100));
    batch.ratings.push_back(rng.uniform());
  }
  for (auto _ : state) backward(vae::elbo_loss(model, model.prior, batch, 0.01, rng).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch_size));
}
BENCHMARK(BM_ElboStep)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
