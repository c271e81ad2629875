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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xmoe/numerics/autodiff.hpp"
#include "xmoe/numerics/rng.hpp"

// Collaborative-preference model: (user, item) embeddings are encoded into a
// diagonal Gaussian latent, decoded into a rating probability, and scored
// against a learned Gaussian-mixture prior whose components double as the
// routing clusters of the explanation generator.

namespace xmoe::vae {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kPriorVarianceFloor = 1e-4;

enum class EncoderKind { kMlp, kAttention };

struct VaeConfig {
  std::size_t user_rows = 1;  // includes the UNK row at index 0
  std::size_t item_rows = 1;
  std::size_t embedding_dim = 32;
  std::size_t latent_dim = 8;
  std::size_t encoder_hidden = 64;
  std::size_t decoder_hidden = 32;
  std::size_t clusters = 3;
  EncoderKind encoder = EncoderKind::kMlp;
};

struct EmbeddingTables {
  Var user;  // (user_rows x embedding_dim)
  Var item;  // (item_rows x embedding_dim)
};

/// Two-layer map from the concatenated embeddings to [mu, log_var].
/// The attention variant treats the two embeddings as a 2-token sequence:
/// project, self-attend, mean-pool, then apply the output layer.
struct EncoderParams {
  Var w1, b1;  // (2*emb x hidden) for MLP, (emb x hidden) for attention
  Var w2, b2;  // (hidden x 2*latent)
  Var wq, wk, wv;  // attention variant only
};

struct DecoderParams {
  Var w1, b1;  // (latent x hidden)
  Var w2, b2;  // (hidden x 1)
};

/// Mixture weights are softmax(pi_logits), so they are positive and sum to
/// one by construction. Component variances are exp(log_var); the trainer
/// keeps log_var >= log(kPriorVarianceFloor) with project().
struct GmmPrior {
  Var pi_logits;  // (K)
  Var mu;         // (K x D)
  Var log_var;    // (K x D)

  std::size_t clusters() const { return pi_logits.value().size(); }
  std::size_t latent_dim() const { return mu.value().cols(); }
  Tensor pi() const;
  Tensor log_pi() const;
  Tensor variance() const;
  void project();

  /// K = 1, mean 0, unit variance; held as constants.
  static GmmPrior standard_normal(std::size_t latent_dim);
  static GmmPrior from_values(const Tensor& pi, const Tensor& mu, const Tensor& var, bool trainable = true);
};

struct LatentSample {
  Var mu;
  Var log_var;
  Tensor eps;
  Var z;
};

struct ClusterPosterior {
  std::vector<double> gamma;
};

class VaeGmm {
 public:
  VaeGmm() = default;
  VaeGmm(const VaeConfig& config, Rng& init_rng);

  const VaeConfig& config() const noexcept { return config_; }

  EmbeddingTables tables;
  EncoderParams encoder;
  DecoderParams decoder;
  GmmPrior prior;

  /// Checkpoint names: vae.embeddings.*, vae.encoder.*, vae.decoder.*, vae.gmm.*
  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<std::pair<std::string, Var>> decoder_parameters() const;

 private:
  VaeConfig config_;
};

// ---- encode / reparameterize / decode ---------------------------------------

/// Batched encoder: rows of (mu, log_var), each (B x D). log_var is clamped to
/// [kLogVarMin, kLogVarMax]. Ids outside the tables raise LookupError.
std::pair<Var, Var> encode_batch(const VaeGmm& model, std::span<const std::size_t> users,
                                 std::span<const std::size_t> items);

/// Single pair; outputs have shape (D).
std::pair<Var, Var> encode(const VaeGmm& model, std::size_t user, std::size_t item);

/// z = mu + eps * exp(log_var / 2) with eps ~ N(0, I) from rng. With
/// zero_noise the draw is skipped and eps is exactly 0.
LatentSample reparameterize(const Var& mu, const Var& log_var, Rng& rng, bool zero_noise = false);

/// Overload with caller-supplied eps (same shape as mu).
LatentSample reparameterize_with(const Var& mu, const Var& log_var, const Tensor& eps);

/// Pre-sigmoid decoder output, shape (B) for (B x D) input or (1) for (D).
Var decode_logit(const DecoderParams& dec, const Var& z);
Var decode(const DecoderParams& dec, const Var& z);

// ---- clusters ---------------------------------------------------------------

/// log pi_c + log N(z | mu_c, var_c) for each component.
std::vector<double> component_log_likelihoods(const GmmPrior& prior, std::span<const double> z);

/// Responsibilities, normalized in log space with max subtraction.
ClusterPosterior gmm_posterior(const GmmPrior& prior, std::span<const double> z);

/// Rows of responsibilities for every row of a (B x D) latent matrix.
Tensor gmm_posterior_rows(const GmmPrior& prior, const Tensor& z);

/// Index of the largest responsibility; ties go to the lowest index.
std::size_t assign_cluster(const ClusterPosterior& posterior);
std::size_t assign_cluster(std::span<const double> scores);

// ---- KL ---------------------------------------------------------------------

/// Closed-form KL(q(z,c|x) || p(z,c)) with q(z|x) = N(mu, diag(exp(log_var)))
/// and q(c|x) = gamma held constant:
///
///   1/2 sum_c g_c sum_d [log vbar_cd + (s2_d + (mu_d - mubar_cd)^2) / vbar_cd]
///   - sum_c g_c log(pi_c / g_c) - 1/2 sum_d (1 + log s2_d)
///
/// Terms with g_c = 0 contribute 0. Input rows (B x D) with gamma (B x K)
/// give a (B) result; rank-1 input gives shape (1).
Var kl_closed_form(const Var& mu, const Var& log_var, const Tensor& gamma, const GmmPrior& prior);

struct MonteCarloEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// Sampling estimate of the same KL: draws z ~ q(z|x) and averages
/// log q(z|x) + sum_c g_c [log g_c - log pi_c - log N(z | mu_c, var_c)].
/// Plain arithmetic only, independent of the autodiff path.
MonteCarloEstimate mc_kl_estimate(std::span<const double> mu, std::span<const double> log_var,
                                  std::span<const double> gamma, const GmmPrior& prior, Rng& rng,
                                  std::size_t samples);

// ---- objective --------------------------------------------------------------

struct RatingBatch {
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;
  std::vector<double> ratings;  // normalized to [0, 1]
  std::size_t size() const noexcept { return users.size(); }
};

struct ElboOptions {
  bool zero_noise = false;
  // Responsibilities to use instead of evaluating them at the sampled z.
  std::optional<Tensor> gamma;
};

struct ElboTerms {
  Var loss;            // mean(recon) + beta * mean(kl)
  Var reconstruction;  // mean BCE
  Var kl;              // mean KL
  LatentSample latent;
  Tensor gamma;        // (B x K), as used
};

/// Negative beta-ELBO averaged over the batch.
ElboTerms elbo_loss(const VaeGmm& model, const GmmPrior& prior, const RatingBatch& batch, double beta,
                    Rng& rng, const ElboOptions& options = {});

// ---- prior initialization ---------------------------------------------------

/// k-means++ seeding plus Lloyd iterations on the rows of `latents`
/// (N x D). pi = cluster frequencies, variances = per-dimension
/// within-cluster variance floored at kPriorVarianceFloor. When
/// `posterior_variance` (N x D) is given, each component also absorbs the
/// mean encoder variance of its members, so it covers the aggregate
/// posterior rather than only the means.
/// Throws InitializationError with fewer than K distinct rows.
GmmPrior init_gmm_prior(const Tensor& latents, std::size_t clusters, Rng& rng,
                        const Tensor* posterior_variance = nullptr);

}  // namespace xmoe::vae
