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

#include "xmoe/training/trainer.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "xmoe/errors.hpp"
#include "xmoe/numerics/ops.hpp"

namespace xmoe::training {

void StageConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (grad_accum_steps == 0) throw ConfigError("grad_accum_steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must lie in [0, 1]");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0 (0 disables clipping)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

StageConfig StageConfig::desk_stage1() {
  StageConfig c;
  c.stage = 1;
  c.epochs = 30;
  c.batch_size = 64;
  c.lr = 1e-2;
  c.beta = 0.01;
  c.clip_norm = 1.0;
  return c;
}

StageConfig StageConfig::desk_stage2() {
  StageConfig c;
  c.stage = 2;
  c.epochs = 3;
  c.batch_size = 1;
  c.lr = 3e-3;
  c.alpha = 0.1;
  c.beta = 0.01;
  c.grad_accum_steps = 8;
  c.clip_norm = 0.3;
  c.warmup_epochs = 0;
  return c;
}

StageConfig StageConfig::reference_stage1() {
  StageConfig c;
  c.stage = 1;
  c.epochs = 30;
  c.batch_size = 4096;
  c.lr = 1e-5;
  c.beta = 0.1;
  return c;
}

StageConfig StageConfig::reference_stage2() {
  StageConfig c;
  c.stage = 2;
  c.epochs = 3;
  c.batch_size = 1;
  c.lr = 3e-5;
  c.alpha = 0.1;
  c.grad_accum_steps = 8;
  c.clip_norm = 0.3;
  c.warmup_epochs = 0;
  return c;
}

namespace {

NamedParams select(const NamedParams& all, bool include_gmm, bool include_lm) {
  NamedParams out;
  for (const auto& [name, p] : all) {
    if (!p.requires_grad()) continue;
    const bool gmm = name.rfind("vae.gmm.", 0) == 0;
    const bool lm = name.rfind("lm.", 0) == 0;
    if ((gmm && !include_gmm) || (lm && !include_lm)) continue;
    out.emplace_back(name, p);
  }
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

// Chunks of batch_size, grouped into optimizer steps of grad_accum_steps.
std::vector<std::vector<std::span<const std::size_t>>> plan_steps(const std::vector<std::size_t>& order,
                                                                 const StageConfig& c) {
  std::vector<std::vector<std::span<const std::size_t>>> steps;
  for (std::size_t pos = 0; pos < order.size();) {
    std::vector<std::span<const std::size_t>> micro;
    for (std::size_t m = 0; m < c.grad_accum_steps && pos < order.size(); ++m) {
      const std::size_t len = std::min(c.batch_size, order.size() - pos);
      micro.emplace_back(order.data() + pos, len);
      pos += len;
    }
    steps.push_back(std::move(micro));
  }
  return steps;
}

struct Accumulator {
  double loss = 0, recon = 0, kl = 0, nll = 0, count = 0;
  void add(double n, double l, double r, double k, double x) {
    loss += n * l;
    recon += n * r;
    kl += n * k;
    nll += n * x;
    count += n;
  }
  void write(EpochLog& log) const {
    log.loss = loss / count;
    log.reconstruction = recon / count;
    log.kl = kl / count;
    log.nll = nll / count;
  }
};

void finish_step(AdamW& opt, const StageConfig& c, vae::GmmPrior& prior, bool prior_trained) {
  if (c.clip_norm > 0.0) clip_grad_norm(opt.params(), c.clip_norm);
  opt.step();
  if (prior_trained) prior.project();
}

bool should_stop(const StageConfig& c, const EpochLog& log, double& best, std::size_t& bad) {
  if (c.patience == 0 || std::isnan(log.valid_loss)) return false;
  if (log.valid_loss < best) {
    best = log.valid_loss;
    bad = 0;
    return false;
  }
  return ++bad >= c.patience;
}

void check_records(const std::vector<data::InteractionRecord>& train) {
  if (train.empty()) throw DataError("training set is empty");
}

}  // namespace

std::vector<std::size_t> occupancy(const Model& model, const std::vector<data::InteractionRecord>& records) {
  std::vector<std::size_t> hist(model.vae.prior.clusters(), 0);
  for (std::size_t c : record_clusters(model, records)) ++hist[c];
  return hist;
}

double stage1_loss(const Model& model, const std::vector<data::InteractionRecord>& records, double beta) {
  if (records.empty()) throw DataError("stage1_loss: no records");
  NoGradGuard no_grad;
  Rng unused(0);
  vae::ElboOptions opts;
  opts.zero_noise = true;
  return vae::elbo_loss(model.vae, model.vae.prior, make_rating_batch(model, records), beta, unused, opts).loss.item();
}

double stage2_loss(const Model& model, const std::vector<data::InteractionRecord>& records, double alpha,
                   double beta) {
  if (records.empty()) throw DataError("stage2_loss: no records");
  NoGradGuard no_grad;
  double total = 0.0;
  if (alpha > 0.0) total += alpha * stage1_loss(model, records, beta) * static_cast<double>(records.size());
  if (alpha < 1.0) {
    for (const auto& r : records) {
      total += (1.0 - alpha) *
               moe::explanation_nll(model.lm, prompt_tokens(model, r), reference_tokens(model, r), record_gate(model, r))
                   .item();
    }
  }
  return total / static_cast<double>(records.size());
}

TrainHistory train_stage1(Model& model, const std::vector<data::InteractionRecord>& train, const StageConfig& config,
                          const std::vector<data::InteractionRecord>* valid, const EpochCallback& on_epoch) {
  config.validate();
  check_records(train);
  const Rng root(config.seed);
  Rng sampling = root.substream("sampling");
  TrainHistory history;

  auto run_phase = [&](const std::string& phase, std::size_t epochs, vae::GmmPrior& prior, bool prior_trained) {
    AdamW opt(select(model.vae.named_parameters(), prior_trained && !config.freeze_gmm, false),
              AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    const bool project = prior_trained && !config.freeze_gmm;
    double best = std::numeric_limits<double>::infinity();
    std::size_t bad = 0;
    for (std::size_t e = 1; e <= epochs; ++e) {
      const auto order = shuffled(train.size(), root.substream("shuffle/" + phase + "/" + std::to_string(e)));
      Accumulator acc;
      for (const auto& micro : plan_steps(order, config)) {
        opt.zero_grad();
        for (const auto& idx : micro) {
          const auto batch = make_rating_batch(model, train, idx);
          const auto terms = vae::elbo_loss(model.vae, prior, batch, config.beta, sampling);
          backward(ops::scale(terms.loss, 1.0 / static_cast<double>(micro.size())));
          acc.add(static_cast<double>(idx.size()), terms.loss.item(), terms.reconstruction.item(), terms.kl.item(), 0.0);
        }
        finish_step(opt, config, prior, project);
        ++history.steps;
      }
      EpochLog log;
      log.epoch = e;
      log.phase = phase;
      acc.write(log);
      log.steps = history.steps;
      if (prior_trained) {
        log.occupancy = occupancy(model, train);
        if (valid && !valid->empty()) log.valid_loss = stage1_loss(model, *valid, config.beta);
      } else {
        log.occupancy = {train.size()};
      }
      history.epochs.push_back(log);
      if (on_epoch) on_epoch(log);
      if (should_stop(config, log, best, bad)) {
        history.early_stopped = true;
        break;
      }
    }
  };

  vae::GmmPrior standard = vae::GmmPrior::standard_normal(model.config.latent_dim);
  if (config.warmup_epochs > 0) run_phase("warmup", config.warmup_epochs, standard, false);

  Rng init_rng = root.substream("gmm-init");
  Tensor means, variances;
  {
    NoGradGuard no_grad;
    const auto b = make_rating_batch(model, train);
    auto [mu, log_var] = vae::encode_batch(model.vae, b.users, b.items);
    means = mu.value();
    variances = log_var.value();
    for (double& v : variances.values()) v = std::exp(v);
  }
  model.vae.prior = vae::init_gmm_prior(means, model.config.clusters, init_rng, &variances);
  run_phase("stage1", config.epochs, model.vae.prior, true);
  model.stage = std::max(model.stage, 1);
  return history;
}

Stage2Terms stage2_objective(const Model& model, const std::vector<data::InteractionRecord>& batch, double alpha,
                             double beta, Rng& rng, const Stage2Options& options) {
  if (batch.empty()) throw DataError("stage 2: empty micro-batch");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (!options.gates.empty() && options.gates.size() != batch.size()) {
    throw DimensionError("stage 2: one gate per record required");
  }
  Stage2Terms out;
  if (alpha > 0.0) {
    const auto terms = vae::elbo_loss(model.vae, model.vae.prior, make_rating_batch(model, batch), beta, rng,
                                      options.elbo);
    out.loss = ops::scale(terms.loss, alpha);
    out.elbo = terms.loss.item();
    out.reconstruction = terms.reconstruction.item();
    out.kl = terms.kl.item();
  }
  if (alpha < 1.0) {
    const double n = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t gate = options.gates.empty() ? record_gate(model, batch[i]) : options.gates[i];
      Var nll = moe::explanation_nll(model.lm, prompt_tokens(model, batch[i]), reference_tokens(model, batch[i]), gate);
      out.nll += nll.item() / n;
      Var part = ops::scale(nll, (1.0 - alpha) / n);
      out.loss = out.loss.defined() ? ops::add(out.loss, part) : part;
    }
  }
  return out;
}

TrainHistory train_stage2(Model& model, const std::vector<data::InteractionRecord>& train, const StageConfig& config,
                          const std::vector<data::InteractionRecord>* valid, const EpochCallback& on_epoch) {
  config.validate();
  if (model.stage < 1) throw SequencingError("stage 2 needs a model that finished stage 1");
  check_records(train);
  const Rng root(config.seed);
  Rng sampling = root.substream("sampling2");
  TrainHistory history;

  const bool train_gmm = !config.freeze_gmm;
  AdamW opt(select(model.named_parameters(), train_gmm, true),
            AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});

  double best = std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    const auto order = shuffled(train.size(), root.substream("shuffle/stage2/" + std::to_string(e)));
    Accumulator acc;
    for (const auto& micro : plan_steps(order, config)) {
      opt.zero_grad();
      for (const auto& idx : micro) {
        std::vector<data::InteractionRecord> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(train[i]);
        const auto terms = stage2_objective(model, batch, config.alpha, config.beta, sampling);
        backward(ops::scale(terms.loss, 1.0 / static_cast<double>(micro.size())));
        acc.add(static_cast<double>(idx.size()), terms.loss.item(), terms.reconstruction, terms.kl, terms.nll);
      }
      finish_step(opt, config, model.vae.prior, train_gmm);
      ++history.steps;
    }
    EpochLog log;
    log.epoch = e;
    log.phase = "stage2";
    acc.write(log);
    log.steps = history.steps;
    log.occupancy = occupancy(model, train);
    if (valid && !valid->empty()) log.valid_loss = stage2_loss(model, *valid, config.alpha, config.beta);
    history.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (should_stop(config, log, best, bad)) {
      history.early_stopped = true;
      break;
    }
  }
  model.stage = 2;
  return history;
}

}  // namespace xmoe::training
