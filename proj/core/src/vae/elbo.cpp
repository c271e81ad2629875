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

#include "xmoe/errors.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/vae/vae_gmm.hpp"

namespace xmoe::vae {

ElboTerms elbo_loss(const VaeGmm& model, const GmmPrior& prior, const RatingBatch& batch, double beta, Rng& rng,
                    const ElboOptions& options) {
  if (beta < 0.0) throw ConfigError("elbo: beta must be non-negative");
  if (batch.size() == 0 || batch.items.size() != batch.size() || batch.ratings.size() != batch.size()) {
    throw DataError("elbo: empty or ragged batch");
  }
  if (prior.latent_dim() != model.config().latent_dim) throw DimensionError("elbo: prior latent dimension mismatch");
  for (double r : batch.ratings) {
    if (!(r >= 0.0 && r <= 1.0)) throw DataError("elbo: normalized rating outside [0, 1]: " + std::to_string(r));
  }

  auto [mu, log_var] = encode_batch(model, batch.users, batch.items);
  LatentSample latent = reparameterize(mu, log_var, rng, options.zero_noise);
  Var logits = decode_logit(model.decoder, latent.z);
  Var recon = ops::bce_with_logits(logits, Tensor::vector(batch.ratings));

  Tensor gamma = options.gamma ? *options.gamma : gmm_posterior_rows(prior, latent.z.value());
  if (gamma.size() != batch.size() * prior.clusters()) throw DimensionError("elbo: gamma override has wrong size");
  Var kl = ops::mean(kl_closed_form(latent.mu, latent.log_var, gamma, prior));
  Var loss = beta == 0.0 ? recon : ops::add(recon, ops::scale(kl, beta));
  return ElboTerms{loss, recon, kl, std::move(latent), std::move(gamma)};
}

}  // namespace xmoe::vae
