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
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xmoe::moe {

using TokenId = std::size_t;

/// Word-level vocabulary. Ids 0-3 are PAD/BOS/EOS/UNK and ids 4-8 the prompt
/// markers U:, I:, R:, F:, EXP:, in that order, for every vocabulary.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kUserMarker = 4;
  static constexpr TokenId kItemMarker = 5;
  static constexpr TokenId kRatingMarker = 6;
  static constexpr TokenId kFeatureMarker = 7;
  static constexpr TokenId kExplanationMarker = 8;
  static constexpr std::size_t kReserved = 9;

  Vocab();

  /// Adds a token if absent and returns its id.
  TokenId add(std::string_view token);
  /// Id of a token, or kUnk.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// One UTF-8 token per line, reserved tokens first.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);
  /// Rebuilds from a token list; the first kReserved entries must be the
  /// reserved tokens.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  static std::string user_token(std::string_view user_id) { return "u" + std::string(user_id); }
  static std::string item_token(std::string_view item_id) { return "i" + std::string(item_id); }
  /// "r<k>" with k = round(rating) clamped to [1, max(1, round(rating_max))].
  static std::string rating_token(double rating, double rating_max = 5.0);

  /// Joins ids back into text, skipping reserved tokens.
  std::string decode(const std::vector<TokenId>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct PromptInput {
  std::string user;  // raw user id
  std::string item;
  double rating = 0.0;
  std::vector<std::string> features;
  double rating_max = 5.0;
};

/// BOS U: u<id> I: i<id> R: r<k> [F: f...] EXP:
/// Unknown tokens map to UNK; an empty feature list omits the F: marker.
std::vector<TokenId> build_prompt(const Vocab& vocab, const PromptInput& input);

}  // namespace xmoe::moe
