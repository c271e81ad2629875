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

#include "xmoe/moe/vocab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "xmoe/data/tokenize.hpp"
#include "xmoe/errors.hpp"

namespace xmoe::moe {

namespace {
constexpr std::array<const char*, Vocab::kReserved> kReservedTokens = {
    "<pad>", "<bos>", "<eos>", "<unk>", "U:", "I:", "R:", "F:", "EXP:"};
}

Vocab::Vocab() {
  for (const char* t : kReservedTokens) add(t);
}

TokenId Vocab::add(std::string_view token) {
  if (token.empty()) throw DataError("vocab: empty token");
  if (token.find('\n') != std::string_view::npos) throw DataError("vocab: token contains a newline");
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const TokenId id = tokens_.size();
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) throw LookupError("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing vocabulary " + path.string());
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kReserved) throw DataError("vocab: missing reserved tokens");
  for (std::size_t i = 0; i < kReserved; ++i) {
    if (tokens[i] != kReservedTokens[i]) {
      throw DataError("vocab: line " + std::to_string(i + 1) + " must be reserved token " + kReservedTokens[i]);
    }
  }
  Vocab v;
  for (std::size_t i = kReserved; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw DataError("vocab: duplicate token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(tokens);
}

std::string Vocab::rating_token(double rating, double rating_max) {
  const long hi = std::max(1L, std::lround(rating_max));
  const long k = std::clamp(std::lround(rating), 1L, hi);
  return "r" + std::to_string(k);
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> words;
  for (TokenId id : ids) {
    if (id < kReserved) continue;
    words.push_back(token(id));
  }
  return data::join_tokens(words);
}

std::vector<TokenId> build_prompt(const Vocab& vocab, const PromptInput& input) {
  std::vector<TokenId> out{Vocab::kBos,
                           Vocab::kUserMarker,
                           vocab.id(Vocab::user_token(input.user)),
                           Vocab::kItemMarker,
                           vocab.id(Vocab::item_token(input.item)),
                           Vocab::kRatingMarker,
                           vocab.id(Vocab::rating_token(input.rating, input.rating_max))};
  if (!input.features.empty()) {
    out.push_back(Vocab::kFeatureMarker);
    for (const auto& f : input.features)
      for (const auto& t : data::tokenize(f)) out.push_back(vocab.id(t));
  }
  out.push_back(Vocab::kExplanationMarker);
  return out;
}

}  // namespace xmoe::moe
