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
#include <numeric>
#include <set>

#include "xmoe/data/dataset.hpp"
#include "xmoe/errors.hpp"
#include "xmoe/numerics/rng.hpp"

namespace xmoe::data {

namespace {

const std::vector<std::vector<std::string>> kDefaultLexicons = {
    {"spicy", "noodles", "curry", "dumplings", "broth", "seafood", "dessert", "pastry"},
    {"quiet", "cozy", "rooftop", "music", "lighting", "garden", "view", "decor"},
    {"price", "staff", "parking", "wifi", "location", "breakfast", "checkin", "pool"},
};

// {0} and {1} are replaced by the first two features. Index 0 is used when
// the rounded rating reaches the rounded cluster bias, index 1 otherwise, so
// the choice is visible through the integer rating token of the prompt.
const std::vector<std::array<std::string, 2>> kTemplates = {
    {"the {0} was delicious and the {1} tasted amazing", "the {0} was fine but the {1} could taste better"},
    {"loved the {0} atmosphere and the {1} felt relaxing", "the {0} atmosphere was okay though the {1} felt dull"},
    {"great {0} and helpful {1} made the stay easy", "the {0} was average and the {1} needs improvement"},
};

std::string fill(const std::string& tmpl, const std::string& a, const std::string& b) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}') {
      out += tmpl[i + 1] == '0' ? a : b;
      i += 2;
    } else {
      out += tmpl[i];
    }
  }
  return out;
}

std::array<std::string, 2> templates_for(std::size_t cluster) {
  if (cluster < kTemplates.size()) return kTemplates[cluster];
  const std::string tag = "group" + std::to_string(cluster);
  return {"fans of " + tag + " praise the {0} and the {1}", "fans of " + tag + " found the {0} and the {1} lacking"};
}

}  // namespace

SynthSpec SynthSpec::resolved() const {
  SynthSpec s = *this;
  if (s.clusters == 0) throw ConfigError("synth: clusters must be >= 1");
  if (s.users < s.clusters) throw ConfigError("synth: need at least one user per cluster");
  if (s.items == 0 || s.records_per_user == 0) throw ConfigError("synth: items and records_per_user must be >= 1");
  if (s.features_per_record == 0) throw ConfigError("synth: features_per_record must be >= 1");
  if (s.noise < 0.0 || s.noise > 1.0) throw ConfigError("synth: noise must lie in [0, 1]");
  if (s.rating_noise < 0.0 || s.item_effect < 0.0) throw ConfigError("synth: noise scales must be non-negative");
  if (s.lexicons.empty()) {
    for (std::size_t c = 0; c < s.clusters; ++c) {
      if (c < kDefaultLexicons.size()) {
        s.lexicons.push_back(kDefaultLexicons[c]);
      } else {
        std::vector<std::string> lex;
        for (std::size_t j = 0; j < 8; ++j) lex.push_back("c" + std::to_string(c) + "w" + std::to_string(j));
        s.lexicons.push_back(std::move(lex));
      }
    }
  }
  if (s.lexicons.size() != s.clusters) throw ConfigError("synth: one lexicon per cluster required");
  std::set<std::string> seen;
  for (const auto& lex : s.lexicons) {
    if (lex.size() < s.features_per_record) {
      throw ConfigError("synth: every lexicon needs at least features_per_record tokens");
    }
    for (const auto& w : lex)
      if (!seen.insert(w).second) throw ConfigError("synth: lexicons must be disjoint ('" + w + "' repeats)");
  }
  if (s.rating_bias.empty()) {
    for (std::size_t c = 0; c < s.clusters; ++c) {
      s.rating_bias.push_back(s.clusters == 1 ? 3.0 : 1.5 + 3.0 * static_cast<double>(c) / (s.clusters - 1.0));
    }
  }
  if (s.rating_bias.size() != s.clusters) throw ConfigError("synth: one rating bias per cluster required");
  return s;
}

SyntheticCorpus generate_synthetic(const SynthSpec& raw) {
  const SynthSpec spec = raw.resolved();
  Rng root(spec.seed);
  Rng assign_rng = root.substream("assign"), item_rng = root.substream("items"), rec_rng = root.substream("records");

  // Balanced assignment: u mod K, then shuffled.
  std::vector<std::size_t> cluster_of(spec.users);
  for (std::size_t u = 0; u < spec.users; ++u) cluster_of[u] = u % spec.clusters;
  for (std::size_t i = spec.users - 1; i > 0; --i) std::swap(cluster_of[i], cluster_of[assign_rng.uniform_index(i + 1)]);

  std::vector<double> item_offset(spec.items);
  for (auto& o : item_offset) o = (2.0 * item_rng.uniform() - 1.0) * spec.item_effect;

  SyntheticCorpus out;
  out.spec = spec;
  out.records.reserve(spec.users * spec.records_per_user);
  for (std::size_t u = 0; u < spec.users; ++u) {
    const std::size_t c = cluster_of[u];
    out.user_clusters.emplace_back(std::to_string(u), c);
    const auto tmpl = templates_for(c);
    for (std::size_t n = 0; n < spec.records_per_user; ++n) {
      InteractionRecord r;
      r.user = std::to_string(u);
      const std::size_t item = rec_rng.uniform_index(spec.items);
      r.item = std::to_string(item);
      double rating = spec.rating_bias[c] + item_offset[item] + spec.rating_noise * rec_rng.normal();
      rating = std::clamp(rating, 1.0, 5.0);
      r.rating = std::round(rating * 10.0) / 10.0;
      while (r.features.size() < spec.features_per_record) {
        std::size_t source = c;
        if (spec.clusters > 1 && rec_rng.uniform() < spec.noise) {
          source = rec_rng.uniform_index(spec.clusters - 1);
          if (source >= c) ++source;
        }
        const auto& lex = spec.lexicons[source];
        const std::string& word = lex[rec_rng.uniform_index(lex.size())];
        if (std::find(r.features.begin(), r.features.end(), word) == r.features.end()) r.features.push_back(word);
      }
      const std::string& second = r.features.size() > 1 ? r.features[1] : r.features[0];
      const bool upbeat = std::round(r.rating) >= std::round(spec.rating_bias[c]);
      r.explanation = fill(tmpl[upbeat ? 0 : 1], r.features[0], second);
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace xmoe::data
