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

#include "xmoe/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "xmoe/errors.hpp"

namespace xmoe::io {

namespace {

using json = nlohmann::ordered_json;

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

json config_to_json(const training::ModelConfig& c) {
  json j;
  j["embedding_dim"] = c.embedding_dim;
  j["latent_dim"] = c.latent_dim;
  j["encoder_hidden"] = c.encoder_hidden;
  j["decoder_hidden"] = c.decoder_hidden;
  j["clusters"] = c.clusters;
  j["encoder"] = c.encoder == vae::EncoderKind::kMlp ? "mlp" : "attention";
  j["model_dim"] = c.model_dim;
  j["blocks"] = c.blocks;
  j["heads"] = c.heads;
  j["context"] = c.context;
  j["base_experts"] = c.base_experts;
  j["base_hidden"] = c.base_hidden;
  j["factor"] = c.factor;
  j["top_k"] = c.top_k;
  j["renormalize_topk"] = c.renormalize_topk;
  j["rating_max"] = c.rating_max;
  j["max_explanation"] = c.max_explanation;
  return j;
}

training::ModelConfig config_from_json(const json& j) {
  training::ModelConfig c;
  try {
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    c.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
    c.clusters = j.at("clusters").get<std::size_t>();
    const auto enc = j.at("encoder").get<std::string>();
    if (enc != "mlp" && enc != "attention") throw ConfigError("unknown encoder kind '" + enc + "'");
    c.encoder = enc == "mlp" ? vae::EncoderKind::kMlp : vae::EncoderKind::kAttention;
    c.model_dim = j.at("model_dim").get<std::size_t>();
    c.blocks = j.at("blocks").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.context = j.at("context").get<std::size_t>();
    c.base_experts = j.at("base_experts").get<std::size_t>();
    c.base_hidden = j.at("base_hidden").get<std::size_t>();
    c.factor = j.at("factor").get<std::size_t>();
    c.top_k = j.at("top_k").get<std::size_t>();
    c.renormalize_topk = j.at("renormalize_topk").get<bool>();
    c.rating_max = j.at("rating_max").get<double>();
    c.max_explanation = j.at("max_explanation").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::vector<std::string> ids_in_order(const data::IdMap& map) {
  std::vector<std::string> out(map.index.size());
  for (const auto& [id, idx] : map.index) out.at(idx - 1) = id;
  return out;
}

data::IdMap ids_from(const std::vector<std::string>& ids) {
  data::IdMap map;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!map.index.emplace(ids[i], i + 1).second) throw IoError("checkpoint: duplicate id '" + ids[i] + "'");
  }
  return map;
}

struct Parsed {
  json manifest;
  std::string payload;
};

Parsed read_file(const std::filesystem::path& path, bool with_payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string magic, length;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) {
    throw IoError("checkpoint " + path.string() + ": format '" + magic.substr(0, 16) + "' is not " + kCheckpointMagic);
  }
  std::getline(in, length);
  std::size_t n = 0;
  try {
    n = std::stoull(length);
  } catch (const std::exception&) {
    throw IoError("checkpoint " + path.string() + ": bad manifest length");
  }
  std::string text(n, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(n))) throw IoError("checkpoint " + path.string() + ": truncated manifest");
  Parsed p;
  try {
    p.manifest = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path.string() + ": bad manifest: " + e.what());
  }
  if (p.manifest.value("format", "") != kCheckpointMagic) {
    throw IoError("checkpoint " + path.string() + ": manifest format version mismatch");
  }
  if (with_payload) p.payload.assign(std::istreambuf_iterator<char>(in), {});
  return p;
}

CheckpointInfo info_from(const json& m) {
  CheckpointInfo info;
  try {
    info.format = m.at("format").get<std::string>();
    const auto dt = m.at("dtype").get<std::string>();
    if (dt != "f32" && dt != "f64") throw IoError("checkpoint: unknown dtype '" + dt + "'");
    info.dtype = dt == "f32" ? Dtype::kF32 : Dtype::kF64;
    info.stage = m.at("stage").get<int>();
    info.seed = m.at("seed").get<std::uint64_t>();
    info.payload_bytes = m.at("payload_bytes").get<std::size_t>();
    for (const auto& t : m.at("tensors")) {
      info.tensors.push_back(
          TensorEntry{t.at("name").get<std::string>(), t.at("shape").get<Shape>(), t.at("offset").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint manifest: ") + e.what());
  }
  return info;
}

}  // namespace

std::string model_config_json(const training::ModelConfig& config) { return config_to_json(config).dump(2); }

training::ModelConfig model_config_from_json(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const training::Model& model, Dtype dtype) {
  const auto params = model.named_parameters();
  const std::size_t width = dtype == Dtype::kF32 ? 4 : 8;
  json tensors = json::array();
  std::string payload;
  std::size_t offset = 0;
  std::set<std::string> names;
  for (const auto& [name, p] : params) {
    if (!names.insert(name).second) throw ContractError("checkpoint: duplicate tensor name " + name);
    tensors.push_back(json{{"name", name}, {"shape", p.shape()}, {"offset", offset}});
    for (double v : p.value().values()) {
      if (dtype == Dtype::kF32) put_le(payload, static_cast<float>(v));
      else put_le(payload, v);
    }
    offset += p.value().size();
  }
  json m;
  m["format"] = kCheckpointMagic;
  m["dtype"] = dtype == Dtype::kF32 ? "f32" : "f64";
  m["stage"] = model.stage;
  m["seed"] = model.seed;
  m["config"] = config_to_json(model.config);
  m["users"] = ids_in_order(model.users);
  m["items"] = ids_in_order(model.items);
  m["vocab"] = model.vocab.tokens();
  m["tensors"] = tensors;
  m["payload_bytes"] = offset * width;
  const std::string text = m.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << '\n' << text.size() << '\n' << text;
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

CheckpointInfo inspect_checkpoint(const std::filesystem::path& path) {
  return info_from(read_file(path, false).manifest);
}

training::Model load_checkpoint(const std::filesystem::path& path) {
  const Parsed p = read_file(path, true);
  const CheckpointInfo info = info_from(p.manifest);
  const std::size_t width = info.dtype == Dtype::kF32 ? 4 : 8;
  if (p.payload.size() != info.payload_bytes) {
    throw IoError("checkpoint " + path.string() + ": payload holds " + std::to_string(p.payload.size()) +
                  " bytes, manifest says " + std::to_string(info.payload_bytes));
  }

  training::Model model;
  try {
    model.config = config_from_json(p.manifest.at("config"));
    model.users = ids_from(p.manifest.at("users").get<std::vector<std::string>>());
    model.items = ids_from(p.manifest.at("items").get<std::vector<std::string>>());
    model.vocab = moe::Vocab::from_tokens(p.manifest.at("vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint manifest: ") + e.what());
  }
  model.stage = info.stage;
  model.seed = info.seed;

  // Build the architecture with throwaway values, then overwrite them.
  Rng scratch(0);
  vae::VaeConfig vc;
  vc.user_rows = model.users.rows();
  vc.item_rows = model.items.rows();
  vc.embedding_dim = model.config.embedding_dim;
  vc.latent_dim = model.config.latent_dim;
  vc.encoder_hidden = model.config.encoder_hidden;
  vc.decoder_hidden = model.config.decoder_hidden;
  vc.clusters = model.config.clusters;
  vc.encoder = model.config.encoder;
  model.vae = vae::VaeGmm(vc, scratch);
  moe::LmConfig lc;
  lc.vocab_size = model.vocab.size();
  lc.model_dim = model.config.model_dim;
  lc.blocks = model.config.blocks;
  lc.heads = model.config.heads;
  lc.context = model.config.context;
  lc.moe = moe::decompose_experts(model.config.base_experts, model.config.base_hidden, model.config.factor,
                                  model.config.top_k, model.config.clusters);
  lc.renormalize_topk = model.config.renormalize_topk;
  model.lm = moe::LanguageModel(lc, scratch);

  std::map<std::string, const TensorEntry*> by_name;
  for (const auto& t : info.tensors) {
    if (!by_name.emplace(t.name, &t).second) throw IoError("checkpoint: duplicate tensor " + t.name);
  }
  auto params = model.named_parameters();
  if (params.size() != by_name.size()) {
    throw IoError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model expects " +
                  std::to_string(params.size()));
  }
  for (auto& [name, var] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint lacks tensor " + name);
    const TensorEntry& e = *it->second;
    if (e.shape != var.shape()) {
      throw IoError("checkpoint tensor " + name + " has shape " + shape_str(e.shape) + ", expected " +
                    shape_str(var.shape()));
    }
    const std::size_t n = shape_size(e.shape);
    if ((e.offset + n) * width > p.payload.size()) throw IoError("checkpoint tensor " + name + " runs past the payload");
    auto dst = var.mutable_value().values();
    const char* src = p.payload.data() + e.offset * width;
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = info.dtype == Dtype::kF32 ? static_cast<double>(get_le<float>(src + 4 * i)) : get_le<double>(src + 8 * i);
    }
  }
  return model;
}

}  // namespace xmoe::io
