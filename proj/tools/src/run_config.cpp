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

#include "xmoe/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <CLI11.hpp>

#include "xmoe/errors.hpp"
#include "xmoe/numerics/rng.hpp"

namespace xmoe::cli {

namespace {

using Values = std::vector<std::string>;
using Setter = std::function<void(RunConfig&, const Values&)>;

struct Entry {
  Setting setting;
  Setter set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
  throw ConfigError("field '" + key + "': expected " + want + ", got '" + value + "'");
}

const std::string& single(const std::string& key, const Values& v) {
  if (v.size() != 1) throw ConfigError("field '" + key + "': expected one value, got " + std::to_string(v.size()));
  return v.front();
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(key, s, "a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& s) {
  double out = 0.0;
  const char* begin = s.data() + (!s.empty() && s[0] == '+' ? 1 : 0);
  const auto [p, ec] = std::from_chars(begin, s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(key, s, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, s, "true or false");
}

// Helpers that bind a key to a field through a member accessor.
template <typename Field>
Entry size_entry(std::string key, std::string help, Field field) {
  return {{key, std::move(help)}, [key, field](RunConfig& c, const Values& v) {
            field(c) = static_cast<std::size_t>(parse_u64(key, single(key, v)));
          }};
}

template <typename Field>
Entry double_entry(std::string key, std::string help, Field field) {
  return {{key, std::move(help)},
          [key, field](RunConfig& c, const Values& v) { field(c) = parse_double(key, single(key, v)); }};
}

template <typename Field>
Entry bool_entry(std::string key, std::string help, Field field) {
  return {{key, std::move(help)},
          [key, field](RunConfig& c, const Values& v) { field(c) = parse_bool(key, single(key, v)); }};
}

template <typename Field>
Entry string_entry(std::string key, std::string help, Field field) {
  return {{key, std::move(help)}, [key, field](RunConfig& c, const Values& v) { field(c) = single(key, v); }};
}

void add_stage(std::vector<Entry>& out, const std::string& name, training::StageConfig RunConfig::*stage) {
  auto s = [stage](auto member) {
    return [stage, member](RunConfig& c) -> auto& { return (c.*stage).*member; };
  };
  using SC = training::StageConfig;
  out.push_back(size_entry(name + ".epochs", "training epochs", s(&SC::epochs)));
  out.push_back(size_entry(name + ".batch_size", "records per micro-batch", s(&SC::batch_size)));
  out.push_back(double_entry(name + ".lr", "AdamW learning rate", s(&SC::lr)));
  out.push_back(double_entry(name + ".beta", "KL weight", s(&SC::beta)));
  out.push_back(double_entry(name + ".alpha", "ELBO share of the explanation-stage loss", s(&SC::alpha)));
  out.push_back(size_entry(name + ".grad_accum_steps", "micro-batches per optimizer step", s(&SC::grad_accum_steps)));
  out.push_back(double_entry(name + ".clip_norm", "global gradient-norm clip, 0 disables", s(&SC::clip_norm)));
  out.push_back(double_entry(name + ".weight_decay", "decoupled weight decay", s(&SC::weight_decay)));
  out.push_back(bool_entry(name + ".freeze_gmm", "keep the mixture prior fixed", s(&SC::freeze_gmm)));
  out.push_back(size_entry(name + ".warmup_epochs", "epochs under a single standard-normal prior", s(&SC::warmup_epochs)));
  out.push_back(size_entry(name + ".patience", "early-stopping patience, 0 disables", s(&SC::patience)));
}

std::vector<Entry> build_entries() {
  std::vector<Entry> e;
  e.push_back({{"seed", "root seed"}, [](RunConfig& c, const Values& v) { c.seed = parse_u64("seed", single("seed", v)); }});
  e.push_back(string_entry("dataset", "JSONL dataset path", [](RunConfig& c) -> auto& { return c.dataset; }));
  e.push_back(string_entry("out", "output path", [](RunConfig& c) -> auto& { return c.out; }));
  e.push_back(string_entry("init", "stage-1 checkpoint for stage 2", [](RunConfig& c) -> auto& { return c.init; }));
  e.push_back(string_entry("labels", "user -> cluster sidecar", [](RunConfig& c) -> auto& { return c.labels; }));
  e.push_back(bool_entry("f64_checkpoint", "write 64-bit checkpoint payloads",
                         [](RunConfig& c) -> auto& { return c.f64_checkpoint; }));
  e.push_back(size_entry("threads", "generation threads", [](RunConfig& c) -> auto& { return c.threads; }));
  e.push_back({{"gates", "gate count; must equal model.clusters"}, [](RunConfig& c, const Values& v) {
                 c.gates = static_cast<std::size_t>(parse_u64("gates", single("gates", v)));
               }});

  auto m = [](auto member) { return [member](RunConfig& c) -> auto& { return c.model.*member; }; };
  using MC = training::ModelConfig;
  e.push_back(size_entry("model.embedding_dim", "user/item embedding width", m(&MC::embedding_dim)));
  e.push_back(size_entry("model.latent_dim", "latent width D", m(&MC::latent_dim)));
  e.push_back(size_entry("model.encoder_hidden", "encoder hidden width", m(&MC::encoder_hidden)));
  e.push_back(size_entry("model.decoder_hidden", "rating decoder hidden width", m(&MC::decoder_hidden)));
  e.push_back(size_entry("model.clusters", "mixture components K", m(&MC::clusters)));
  e.push_back({{"model.encoder", "mlp or attention"}, [](RunConfig& c, const Values& v) {
                 const auto& s = single("model.encoder", v);
                 if (s == "mlp") c.model.encoder = vae::EncoderKind::kMlp;
                 else if (s == "attention") c.model.encoder = vae::EncoderKind::kAttention;
                 else bad_value("model.encoder", s, "mlp or attention");
               }});
  e.push_back(size_entry("model.model_dim", "transformer width", m(&MC::model_dim)));
  e.push_back(size_entry("model.blocks", "transformer blocks", m(&MC::blocks)));
  e.push_back(size_entry("model.heads", "attention heads", m(&MC::heads)));
  e.push_back(size_entry("model.context", "context window in tokens", m(&MC::context)));
  e.push_back(size_entry("model.base_experts", "experts before decomposition (N)", m(&MC::base_experts)));
  e.push_back(size_entry("model.base_hidden", "expert hidden width before decomposition (d)", m(&MC::base_hidden)));
  e.push_back(size_entry("model.factor", "decomposition factor (r)", m(&MC::factor)));
  e.push_back(size_entry("model.top_k", "experts per token (k)", m(&MC::top_k)));
  e.push_back(bool_entry("model.renormalize_topk", "renormalize selected expert scores", m(&MC::renormalize_topk)));
  e.push_back(double_entry("model.rating_max", "rating scale maximum", m(&MC::rating_max)));
  e.push_back(size_entry("model.max_explanation", "explanation token cap", m(&MC::max_explanation)));

  add_stage(e, "stage1", &RunConfig::stage1);
  add_stage(e, "stage2", &RunConfig::stage2);

  auto y = [](auto member) { return [member](RunConfig& c) -> auto& { return c.synth.*member; }; };
  using SS = data::SynthSpec;
  e.push_back(size_entry("synth.clusters", "planted clusters", y(&SS::clusters)));
  e.push_back(size_entry("synth.users", "users", y(&SS::users)));
  e.push_back(size_entry("synth.items", "items", y(&SS::items)));
  e.push_back(size_entry("synth.records_per_user", "records per user", y(&SS::records_per_user)));
  e.push_back(size_entry("synth.features_per_record", "features per record", y(&SS::features_per_record)));
  e.push_back(double_entry("synth.noise", "off-cluster feature probability", y(&SS::noise)));
  e.push_back(double_entry("synth.rating_noise", "rating noise std-dev", y(&SS::rating_noise)));
  e.push_back(double_entry("synth.item_effect", "item offset half-width", y(&SS::item_effect)));
  e.push_back({{"synth.seed", "corpus seed"},
               [](RunConfig& c, const Values& v) { c.synth.seed = parse_u64("synth.seed", single("synth.seed", v)); }});
  e.push_back({{"synth.rating_bias", "per-cluster rating centre", true}, [](RunConfig& c, const Values& v) {
                 c.synth.rating_bias.clear();
                 for (const auto& s : v) c.synth.rating_bias.push_back(parse_double("synth.rating_bias", s));
               }});
  return e;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = build_entries();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  auto stage = [](training::StageConfig s, int n) {
    s.stage = n;
    s.validate();
  };
  stage(stage1, 1);
  stage(stage2, 2);
  if (gates && *gates != model.clusters) {
    throw ConfigError("gates (" + std::to_string(*gates) + ") must equal model.clusters (" +
                      std::to_string(model.clusters) + ")");
  }
  if (threads == 0) throw ConfigError("field 'threads': must be at least 1");
}

const std::vector<Setting>& settings() {
  static const std::vector<Setting> out = [] {
    std::vector<Setting> s;
    for (const auto& e : entries()) s.push_back(e.setting);
    return s;
  }();
  return out;
}

void apply_setting(RunConfig& config, const std::string& key, const std::vector<std::string>& values) {
  for (const auto& e : entries()) {
    if (e.setting.key == key) {
      e.set(config, values);
      return;
    }
  }
  throw ConfigError("unknown field '" + key + "'");
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  for (const auto& item : items) {
    // Table open/close markers.
    if (item.name == "++" || item.name == "--") continue;
    try {
      apply_setting(config, item.fullname(), item.inputs);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str(), path.string());
}

std::uint64_t data_seed(std::uint64_t root_seed) { return Rng(root_seed).substream("data").next_u64(); }

data::DatasetSplit load_split(const std::filesystem::path& dataset, std::uint64_t root_seed) {
  return data::split_records(data::load_records(dataset), data_seed(root_seed));
}

}  // namespace xmoe::cli
