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

#include <cmath>

#include "xmoe/errors.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/vae/vae_gmm.hpp"

namespace xmoe::vae {

namespace {

Var init_matrix(Rng& rng, std::size_t in, std::size_t out) {
  Tensor t = sample_normal(rng, {in, out});
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : t.values()) v *= s;
  return Var::parameter(std::move(t));
}

Var init_embedding(Rng& rng, std::size_t rows, std::size_t dim) {
  Tensor t = sample_normal(rng, {rows, dim});
  for (auto& v : t.values()) v *= 0.1;
  return Var::parameter(std::move(t));
}

Var zeros(std::size_t n) { return Var::parameter(Tensor({n})); }

}  // namespace

VaeGmm::VaeGmm(const VaeConfig& config, Rng& rng) : config_(config) {
  if (config.latent_dim == 0 || config.embedding_dim == 0 || config.clusters == 0) {
    throw ConfigError("vae: latent_dim, embedding_dim and clusters must be positive");
  }
  const std::size_t e = config.embedding_dim, h = config.encoder_hidden, d = config.latent_dim;
  tables.user = init_embedding(rng, config.user_rows, e);
  tables.item = init_embedding(rng, config.item_rows, e);
  if (config.encoder == EncoderKind::kMlp) {
    encoder.w1 = init_matrix(rng, 2 * e, h);
  } else {
    encoder.w1 = init_matrix(rng, e, h);
    encoder.wq = init_matrix(rng, h, h);
    encoder.wk = init_matrix(rng, h, h);
    encoder.wv = init_matrix(rng, h, h);
  }
  encoder.b1 = zeros(h);
  encoder.w2 = init_matrix(rng, h, 2 * d);
  encoder.b2 = zeros(2 * d);
  decoder.w1 = init_matrix(rng, d, config.decoder_hidden);
  decoder.b1 = zeros(config.decoder_hidden);
  decoder.w2 = init_matrix(rng, config.decoder_hidden, 1);
  decoder.b2 = zeros(1);

  prior.pi_logits = Var::parameter(Tensor({config.clusters}));
  prior.mu = Var::parameter(sample_normal(rng, {config.clusters, d}));
  prior.log_var = Var::parameter(Tensor({config.clusters, d}));
}

std::vector<std::pair<std::string, Var>> VaeGmm::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out{
      {"vae.embeddings.user", tables.user}, {"vae.embeddings.item", tables.item},
      {"vae.encoder.w1", encoder.w1},       {"vae.encoder.b1", encoder.b1},
      {"vae.encoder.w2", encoder.w2},       {"vae.encoder.b2", encoder.b2},
  };
  if (config_.encoder == EncoderKind::kAttention) {
    out.emplace_back("vae.encoder.wq", encoder.wq);
    out.emplace_back("vae.encoder.wk", encoder.wk);
    out.emplace_back("vae.encoder.wv", encoder.wv);
  }
  for (auto& p : decoder_parameters()) out.push_back(std::move(p));
  out.emplace_back("vae.gmm.pi_logits", prior.pi_logits);
  out.emplace_back("vae.gmm.mu", prior.mu);
  out.emplace_back("vae.gmm.log_var", prior.log_var);
  return out;
}

std::vector<std::pair<std::string, Var>> VaeGmm::decoder_parameters() const {
  return {{"vae.decoder.w1", decoder.w1},
          {"vae.decoder.b1", decoder.b1},
          {"vae.decoder.w2", decoder.w2},
          {"vae.decoder.b2", decoder.b2}};
}

std::pair<Var, Var> encode_batch(const VaeGmm& model, std::span<const std::size_t> users,
                                 std::span<const std::size_t> items) {
  if (users.size() != items.size() || users.empty()) {
    throw DimensionError("encode: need equal, non-empty user and item batches");
  }
  const auto& cfg = model.config();
  for (auto u : users)
    if (u >= cfg.user_rows) throw LookupError("user index " + std::to_string(u) + " outside embedding table");
  for (auto i : items)
    if (i >= cfg.item_rows) throw LookupError("item index " + std::to_string(i) + " outside embedding table");

  const auto& enc = model.encoder;
  Var eu = ops::gather_rows(model.tables.user, users);
  Var ei = ops::gather_rows(model.tables.item, items);
  Var out;
  if (cfg.encoder == EncoderKind::kMlp) {
    Var x = ops::concat_cols({eu, ei});
    Var h = ops::tanh(ops::add_row_vector(ops::matmul(x, enc.w1), enc.b1));
    out = ops::add_row_vector(ops::matmul(h, enc.w2), enc.b2);
  } else {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.encoder_hidden));
    const Var pool = Var::constant(Tensor({1, 2}, {0.5, 0.5}));
    std::vector<Var> rows;
    rows.reserve(users.size());
    for (std::size_t b = 0; b < users.size(); ++b) {
      Var tokens = ops::concat_cols({ops::slice_rows(eu, b, b + 1), ops::slice_rows(ei, b, b + 1)});
      tokens = ops::reshape(tokens, {2, cfg.embedding_dim});
      Var h = ops::tanh(ops::add_row_vector(ops::matmul(tokens, enc.w1), enc.b1));
      Var q = ops::matmul(h, enc.wq), k = ops::matmul(h, enc.wk), v = ops::matmul(h, enc.wv);
      Var attn = ops::softmax(ops::scale(ops::matmul_nt(q, k), inv_sqrt));
      Var ctx = ops::add(h, ops::matmul(attn, v));
      rows.push_back(ops::matmul(pool, ctx));
    }
    Var pooled = rows.size() == 1 ? rows[0] : ops::reshape(ops::concat_cols(rows), {users.size(), cfg.encoder_hidden});
    out = ops::add_row_vector(ops::matmul(pooled, enc.w2), enc.b2);
  }
  const std::size_t d = cfg.latent_dim;
  Var mu = ops::slice_cols(out, 0, d);
  Var log_var = ops::clamp(ops::slice_cols(out, d, 2 * d), kLogVarMin, kLogVarMax);
  return {mu, log_var};
}

std::pair<Var, Var> encode(const VaeGmm& model, std::size_t user, std::size_t item) {
  const std::size_t u[] = {user};
  const std::size_t i[] = {item};
  auto [mu, log_var] = encode_batch(model, u, i);
  const std::size_t d = model.config().latent_dim;
  return {ops::reshape(mu, {d}), ops::reshape(log_var, {d})};
}

LatentSample reparameterize_with(const Var& mu, const Var& log_var, const Tensor& eps) {
  if (eps.shape() != mu.shape() || log_var.shape() != mu.shape()) {
    throw DimensionError("reparameterize: mu, log_var and eps shapes differ");
  }
  Var clamped = ops::clamp(log_var, kLogVarMin, kLogVarMax);
  Var sigma = ops::exp(ops::scale(clamped, 0.5));
  Var z = ops::add(mu, ops::mul(Var::constant(eps), sigma));
  return LatentSample{mu, clamped, eps, z};
}

LatentSample reparameterize(const Var& mu, const Var& log_var, Rng& rng, bool zero_noise) {
  Tensor eps = zero_noise ? Tensor(mu.shape()) : sample_normal(rng, mu.shape());
  return reparameterize_with(mu, log_var, eps);
}

Var decode_logit(const DecoderParams& dec, const Var& z) {
  const bool single = z.value().rank() == 1;
  Var zz = single ? ops::reshape(z, {1, z.value().size()}) : z;
  Var h = ops::tanh(ops::add_row_vector(ops::matmul(zz, dec.w1), dec.b1));
  Var logit = ops::add_row_vector(ops::matmul(h, dec.w2), dec.b2);
  return ops::reshape(logit, {zz.value().rows()});
}

Var decode(const DecoderParams& dec, const Var& z) { return ops::sigmoid(decode_logit(dec, z)); }

}  // namespace xmoe::vae
