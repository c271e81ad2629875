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

#include "xmoe/training/model.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "xmoe/data/tokenize.hpp"
#include "xmoe/errors.hpp"

namespace xmoe::training {

void ModelConfig::validate() const {
  if (embedding_dim == 0 || latent_dim == 0 || encoder_hidden == 0 || decoder_hidden == 0) {
    throw ConfigError("model: VAE widths must be positive");
  }
  if (clusters == 0) throw ConfigError("model: clusters must be >= 1");
  if (!(rating_max > 0.0)) throw ConfigError("model: rating_max must be positive");
  if (max_explanation == 0) throw ConfigError("model: max_explanation must be >= 1");
  moe::MoeLayerConfig{base_experts, base_hidden, factor, top_k, clusters}.validate();
}

NamedParams Model::named_parameters() const {
  NamedParams out = vae.named_parameters();
  for (auto& p : lm.named_parameters()) out.push_back(std::move(p));
  return out;
}

moe::Vocab build_vocab(const std::vector<data::InteractionRecord>& train, const data::IdMap& users,
                       const data::IdMap& items, double rating_max) {
  moe::Vocab vocab;
  for (const auto& [id, idx] : users.index) vocab.add(moe::Vocab::user_token(id));
  for (const auto& [id, idx] : items.index) vocab.add(moe::Vocab::item_token(id));
  const auto top = static_cast<int>(std::max(1.0, std::round(rating_max)));
  for (int k = 1; k <= top; ++k) vocab.add("r" + std::to_string(k));
  for (const auto& r : train) {
    for (const auto& f : r.features)
      for (const auto& t : data::tokenize(f)) vocab.add(t);
    for (const auto& t : data::tokenize(r.explanation)) vocab.add(t);
  }
  return vocab;
}

Model build_model(const ModelConfig& config, const data::DatasetSplit& split, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  m.seed = seed;
  m.users = split.users;
  m.items = split.items;
  m.vocab = build_vocab(split.train, split.users, split.items, config.rating_max);

  Rng init = Rng(seed).substream("init");
  vae::VaeConfig vc;
  vc.user_rows = m.users.rows();
  vc.item_rows = m.items.rows();
  vc.embedding_dim = config.embedding_dim;
  vc.latent_dim = config.latent_dim;
  vc.encoder_hidden = config.encoder_hidden;
  vc.decoder_hidden = config.decoder_hidden;
  vc.clusters = config.clusters;
  vc.encoder = config.encoder;
  m.vae = vae::VaeGmm(vc, init);

  moe::LmConfig lc;
  lc.vocab_size = m.vocab.size();
  lc.model_dim = config.model_dim;
  lc.blocks = config.blocks;
  lc.heads = config.heads;
  lc.context = config.context;
  lc.moe = moe::decompose_experts(config.base_experts, config.base_hidden, config.factor, config.top_k,
                                  config.clusters);
  lc.renormalize_topk = config.renormalize_topk;
  m.lm = moe::LanguageModel(lc, init);
  return m;
}

vae::RatingBatch make_rating_batch(const Model& model, const std::vector<data::InteractionRecord>& records,
                                   std::span<const std::size_t> indices) {
  vae::RatingBatch b;
  b.users.reserve(indices.size());
  b.items.reserve(indices.size());
  b.ratings.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& r = records.at(i);
    if (r.rating > model.config.rating_max) {
      throw DataError("rating " + std::to_string(r.rating) + " exceeds rating_max " +
                      std::to_string(model.config.rating_max));
    }
    b.users.push_back(model.users.lookup(r.user));
    b.items.push_back(model.items.lookup(r.item));
    b.ratings.push_back(r.rating / model.config.rating_max);
  }
  return b;
}

vae::RatingBatch make_rating_batch(const Model& model, const std::vector<data::InteractionRecord>& records) {
  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), 0);
  return make_rating_batch(model, records, all);
}

moe::PromptInput prompt_input(const Model& model, const data::InteractionRecord& record) {
  return moe::PromptInput{record.user, record.item, record.rating, record.features, model.config.rating_max};
}

std::vector<moe::TokenId> prompt_tokens(const Model& model, const data::InteractionRecord& record) {
  auto p = moe::build_prompt(model.vocab, prompt_input(model, record));
  if (p.size() >= model.lm.config().context) {
    throw ContextError("prompt of " + std::to_string(p.size()) + " tokens leaves no room in context " +
                       std::to_string(model.lm.config().context));
  }
  return p;
}

std::vector<moe::TokenId> reference_tokens(const Model& model, const data::InteractionRecord& record) {
  const std::size_t prompt_len = prompt_tokens(model, record).size();
  // Teacher forcing feeds prompt + reference minus its last token.
  const std::size_t room = model.lm.config().context - prompt_len + 1;
  const std::size_t limit = std::min(model.config.max_explanation, room - 1);
  std::vector<moe::TokenId> out;
  for (const auto& t : data::tokenize(record.explanation)) {
    if (out.size() == limit) break;
    out.push_back(model.vocab.id(t));
  }
  out.push_back(moe::Vocab::kEos);
  return out;
}

std::size_t record_gate(const Model& model, const data::InteractionRecord& record) {
  NoGradGuard no_grad;
  auto [mu, log_var] = vae::encode(model.vae, model.users.lookup(record.user), model.items.lookup(record.item));
  return vae::assign_cluster(vae::gmm_posterior(model.vae.prior, mu.value().values()));
}

Tensor encoder_means(const Model& model, const std::vector<data::InteractionRecord>& records) {
  NoGradGuard no_grad;
  const auto b = make_rating_batch(model, records);
  return vae::encode_batch(model.vae, b.users, b.items).first.value();
}

std::vector<std::size_t> record_clusters(const Model& model, const std::vector<data::InteractionRecord>& records) {
  if (records.empty()) return {};
  const Tensor gamma = vae::gmm_posterior_rows(model.vae.prior, encoder_means(model, records));
  const std::size_t k = gamma.cols();
  std::vector<std::size_t> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out[i] = vae::assign_cluster(gamma.values().subspan(i * k, k));
  return out;
}

std::vector<std::size_t> user_clusters(const Model& model, const std::vector<data::InteractionRecord>& records,
                                       const std::vector<std::string>& users) {
  const auto clusters = record_clusters(model, records);
  const std::size_t k = model.vae.prior.clusters();
  std::map<std::string, std::vector<std::size_t>> votes;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& v = votes[records[i].user];
    if (v.empty()) v.assign(k, 0);
    ++v[clusters[i]];
  }
  std::vector<std::size_t> out;
  out.reserve(users.size());
  for (const auto& u : users) {
    auto it = votes.find(u);
    if (it == votes.end()) throw LookupError("user " + u + " has no records to vote with");
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (it->second[c] > it->second[best]) best = c;
    out.push_back(best);
  }
  return out;
}

}  // namespace xmoe::training
