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

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "xmoe/errors.hpp"
#include "xmoe/numerics/ops.hpp"
#include "xmoe/vae/vae_gmm.hpp"

namespace xmoe::vae {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;
}

Tensor GmmPrior::log_pi() const {
  const Tensor& logits = pi_logits.value();
  Tensor out(logits.shape());
  const double mx = *std::max_element(logits.values().begin(), logits.values().end());
  double z = 0.0;
  for (double v : logits.values()) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] = logits[c] - lz;
  return out;
}

Tensor GmmPrior::pi() const {
  Tensor out = log_pi();
  for (auto& v : out.values()) v = std::exp(v);
  return out;
}

Tensor GmmPrior::variance() const {
  Tensor out = log_var.value();
  for (auto& v : out.values()) v = std::exp(v);
  return out;
}

void GmmPrior::project() {
  if (!log_var.requires_grad()) return;
  const double floor = std::log(kPriorVarianceFloor);
  for (auto& v : log_var.mutable_value().values()) v = std::max(v, floor);
}

GmmPrior GmmPrior::standard_normal(std::size_t latent_dim) {
  return GmmPrior{Var::constant(Tensor({1})), Var::constant(Tensor({1, latent_dim})),
                  Var::constant(Tensor({1, latent_dim}))};
}

GmmPrior GmmPrior::from_values(const Tensor& pi, const Tensor& mu, const Tensor& var, bool trainable) {
  const std::size_t k = pi.size();
  if (mu.rank() != 2 || mu.rows() != k || var.shape() != mu.shape()) {
    throw DimensionError("gmm prior: expected pi (K), mu and var (K x D)");
  }
  Tensor logits({k});
  for (std::size_t c = 0; c < k; ++c) {
    if (!(pi[c] > 0.0)) throw DomainError("gmm prior: mixture weights must be positive");
    logits[c] = std::log(pi[c]);
  }
  Tensor lv(var.shape());
  for (std::size_t i = 0; i < var.size(); ++i) {
    if (!(var[i] > 0.0)) throw DomainError("gmm prior: variances must be positive");
    lv[i] = std::log(var[i]);
  }
  auto make = trainable ? &Var::parameter : &Var::constant;
  return GmmPrior{make(std::move(logits)), make(mu), make(std::move(lv))};
}

std::vector<double> component_log_likelihoods(const GmmPrior& prior, std::span<const double> z) {
  const std::size_t k = prior.clusters(), d = prior.latent_dim();
  if (z.size() != d) throw DimensionError("gmm_posterior: latent has wrong dimension");
  const Tensor log_pi = prior.log_pi();
  const Tensor& mu = prior.mu.value();
  const Tensor& lv = prior.log_var.value();
  std::vector<double> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    double s = log_pi[c];
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = z[j] - mu[c * d + j];
      s += -kHalfLog2Pi - 0.5 * lv[c * d + j] - 0.5 * diff * diff * std::exp(-lv[c * d + j]);
    }
    out[c] = s;
  }
  return out;
}

ClusterPosterior gmm_posterior(const GmmPrior& prior, std::span<const double> z) {
  std::vector<double> logp = component_log_likelihoods(prior, z);
  const double mx = *std::max_element(logp.begin(), logp.end());
  if (!std::isfinite(mx)) throw DomainError("gmm_posterior: every component density underflowed");
  double total = 0.0;
  for (auto& v : logp) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : logp) v /= total;
  return ClusterPosterior{std::move(logp)};
}

Tensor gmm_posterior_rows(const GmmPrior& prior, const Tensor& z) {
  const std::size_t b = z.rows(), d = z.cols(), k = prior.clusters();
  Tensor out({b, k});
  for (std::size_t r = 0; r < b; ++r) {
    auto post = gmm_posterior(prior, z.values().subspan(r * d, d));
    std::copy(post.gamma.begin(), post.gamma.end(), out.storage().begin() + r * k);
  }
  return out;
}

std::size_t assign_cluster(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

std::size_t assign_cluster(const ClusterPosterior& posterior) { return assign_cluster(posterior.gamma); }

Var kl_closed_form(const Var& mu, const Var& log_var, const Tensor& gamma, const GmmPrior& prior) {
  const bool single = mu.value().rank() == 1;
  const std::size_t d = prior.latent_dim(), k = prior.clusters();
  Var m = single ? ops::reshape(mu, {1, mu.value().size()}) : mu;
  Var lv = single ? ops::reshape(log_var, {1, log_var.value().size()}) : log_var;
  const std::size_t b = m.value().rows();
  if (m.value().cols() != d || lv.shape() != m.shape()) throw DimensionError("kl: latent dimension mismatch");
  if (gamma.size() != b * k) throw DimensionError("kl: gamma must be (B x K)");

  Var var = ops::exp(lv);
  Var prior_inv_var = ops::exp(ops::neg(prior.log_var));  // (K x D)
  Var log_pi = ops::log_softmax(prior.pi_logits);          // (K)

  // Per component: sum_d [log vbar_cd + (s2_d + (mu_d - mubar_cd)^2) / vbar_cd]
  std::vector<Var> per_component;
  per_component.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    Var mubar = ops::reshape(ops::slice_rows(prior.mu, c, c + 1), {d});
    Var inv = ops::reshape(ops::slice_rows(prior_inv_var, c, c + 1), {d});
    Var lvbar = ops::reshape(ops::slice_rows(prior.log_var, c, c + 1), {d});
    Var diff = ops::add_row_vector(m, ops::neg(mubar));
    Var ratio = ops::mul_row_vector(ops::add(var, ops::square(diff)), inv);
    Var term = ops::add_row_vector(ratio, lvbar);
    per_component.push_back(ops::reshape(ops::sum_rows(term), {b, 1}));
  }
  Var component_terms = k == 1 ? per_component[0] : ops::concat_cols(per_component);  // (B x K)

  Tensor g = gamma.reshaped({b, k});
  Tensor g_log_g({b});
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      const double v = g[r * k + c];
      if (v < 0.0) throw DomainError("kl: negative responsibility");
      if (v > 0.0) g_log_g[r] += v * std::log(v);
    }
  Var gv = Var::constant(g);
  Var weighted = ops::scale(ops::sum_rows(ops::mul(component_terms, gv)), 0.5);
  Var cross_pi = ops::reshape(ops::matmul(gv, ops::reshape(log_pi, {k, 1})), {b});
  Var entropy = ops::scale(ops::sum_rows(ops::add_scalar(lv, 1.0)), 0.5);
  Var kl = ops::sub(ops::add(ops::sub(weighted, cross_pi), Var::constant(g_log_g)), entropy);
  return single ? ops::reshape(kl, {1}) : kl;
}

MonteCarloEstimate mc_kl_estimate(std::span<const double> mu, std::span<const double> log_var,
                                  std::span<const double> gamma, const GmmPrior& prior, Rng& rng,
                                  std::size_t samples) {
  const std::size_t d = prior.latent_dim(), k = prior.clusters();
  if (mu.size() != d || log_var.size() != d || gamma.size() != k) {
    throw DimensionError("mc_kl_estimate: argument sizes do not match the prior");
  }
  if (samples < 2) throw ContractError("mc_kl_estimate: need at least two samples");
  const Tensor log_pi = prior.log_pi();
  const Tensor& pmu = prior.mu.value();
  const Tensor& plv = prior.log_var.value();

  double cat_term = 0.0;  // sum_c g_c (log g_c - log pi_c)
  for (std::size_t c = 0; c < k; ++c)
    if (gamma[c] > 0.0) cat_term += gamma[c] * (std::log(gamma[c]) - log_pi[c]);

  std::vector<double> z(d);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double log_q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double eps = rng.normal();
      z[j] = mu[j] + eps * std::exp(0.5 * log_var[j]);
      log_q += -kHalfLog2Pi - 0.5 * log_var[j] - 0.5 * eps * eps;
    }
    double value = log_q + cat_term;
    for (std::size_t c = 0; c < k; ++c) {
      if (gamma[c] == 0.0) continue;
      double log_p = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = z[j] - pmu[c * d + j];
        log_p += -kHalfLog2Pi - 0.5 * plv[c * d + j] - 0.5 * diff * diff * std::exp(-plv[c * d + j]);
      }
      value -= gamma[c] * log_p;
    }
    sum += value;
    sum_sq += value * value;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return MonteCarloEstimate{mean, std::sqrt(var / n)};
}

GmmPrior init_gmm_prior(const Tensor& latents, std::size_t clusters, Rng& rng, const Tensor* posterior_variance) {
  if (latents.rank() != 2) throw DimensionError("init_gmm_prior: latents must be (N x D)");
  const std::size_t n = latents.rows(), d = latents.cols();
  if (posterior_variance && posterior_variance->shape() != latents.shape()) {
    throw DimensionError("init_gmm_prior: posterior variances must match the latents' shape");
  }
  if (clusters == 0) throw InitializationError("init_gmm_prior: need at least one cluster");
  {
    std::set<std::vector<double>> distinct;
    for (std::size_t i = 0; i < n && distinct.size() < clusters; ++i) {
      distinct.emplace(latents.storage().begin() + i * d, latents.storage().begin() + (i + 1) * d);
    }
    if (distinct.size() < clusters) {
      throw InitializationError("init_gmm_prior: " + std::to_string(clusters) + " clusters need at least as many "
                                "distinct latent vectors");
    }
  }
  auto row = [&](std::size_t i) { return latents.storage().data() + i * d; };
  auto dist2 = [d](const double* a, const double* b) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
  };

  // k-means++ seeding
  std::vector<double> centers(clusters * d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.uniform_index(n);
  std::copy_n(row(first), d, centers.begin());
  for (std::size_t c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dist2(row(i), centers.data() + (c - 1) * d));
      total += nearest[i];
    }
    double target = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (nearest[i] <= 0.0) continue;
      target -= nearest[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    std::copy_n(row(pick), d, centers.begin() + c * d);
  }

  // Lloyd iterations
  std::vector<std::size_t> assign(n, clusters);
  for (int iter = 0; iter < 200; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = dist2(row(i), centers.data());
      for (std::size_t c = 1; c < clusters; ++c) {
        const double dc = dist2(row(i), centers.data() + c * d);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    std::vector<double> sums(clusters * d, 0.0);
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += row(i)[j];
    }
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster at the point farthest from its center.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double di = dist2(row(i), centers.data() + assign[i] * d);
          if (di > far_d) {
            far_d = di;
            far = i;
          }
        }
        std::copy_n(row(far), d, centers.begin() + c * d);
        changed = true;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) centers[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
    }
    if (!changed) break;
  }

  Tensor pi({clusters}), mu({clusters, d}), var({clusters, d});
  std::vector<std::size_t> counts(clusters, 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[assign[i]];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = row(i)[j] - centers[assign[i] * d + j];
      var[assign[i] * d + j] += diff * diff;
      if (posterior_variance) var[assign[i] * d + j] += (*posterior_variance)[i * d + j];
    }
  for (std::size_t c = 0; c < clusters; ++c) {
    pi[c] = std::max<double>(static_cast<double>(counts[c]), 1.0) / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      mu[c * d + j] = centers[c * d + j];
      const double v = counts[c] ? var[c * d + j] / static_cast<double>(counts[c]) : 0.0;
      var[c * d + j] = std::max(v, kPriorVarianceFloor);
    }
  }
  double total = 0.0;
  for (double p : pi.values()) total += p;
  for (auto& p : pi.values()) p /= total;
  return GmmPrior::from_values(pi, mu, var, true);
}

}  // namespace xmoe::vae
