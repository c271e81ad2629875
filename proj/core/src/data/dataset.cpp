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

#include "xmoe/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "xmoe/errors.hpp"
#include "xmoe/numerics/rng.hpp"

namespace xmoe::data {

namespace {

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

InteractionRecord parse_record(std::string_view line, std::size_t line_number) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    bad_line(line_number, std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) bad_line(line_number, "record is not an object");
  static const std::set<std::string> kFields = {"user", "item", "rating", "features", "explanation"};
  for (const auto& f : kFields)
    if (!j.contains(f)) bad_line(line_number, "missing field '" + f + "'");
  for (const auto& [key, value] : j.items())
    if (!kFields.count(key)) bad_line(line_number, "unexpected field '" + key + "'");

  InteractionRecord r;
  if (!j["user"].is_string() || !j["item"].is_string()) bad_line(line_number, "user and item must be strings");
  r.user = j["user"].get<std::string>();
  r.item = j["item"].get<std::string>();
  if (r.user.empty() || r.item.empty()) bad_line(line_number, "user and item must be non-empty");
  if (!j["rating"].is_number()) bad_line(line_number, "rating must be a number");
  r.rating = j["rating"].get<double>();
  if (!(r.rating > 0.0) || !std::isfinite(r.rating)) bad_line(line_number, "rating must be positive");
  if (!j["features"].is_array()) bad_line(line_number, "features must be an array of strings");
  for (const auto& f : j["features"]) {
    if (!f.is_string()) bad_line(line_number, "features must be an array of strings");
    r.features.push_back(f.get<std::string>());
  }
  if (!j["explanation"].is_string()) bad_line(line_number, "explanation must be a string");
  r.explanation = j["explanation"].get<std::string>();
  if (r.explanation.empty()) bad_line(line_number, "explanation must be non-empty");
  return r;
}

std::string format_record(const InteractionRecord& r) {
  nlohmann::ordered_json j;
  j["user"] = r.user;
  j["item"] = r.item;
  j["rating"] = r.rating;
  j["features"] = r.features;
  j["explanation"] = r.explanation;
  return j.dump();
}

std::vector<InteractionRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::vector<InteractionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line, n));
  }
  return out;
}

void save_records(const std::filesystem::path& path, const std::vector<InteractionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path.string());
  for (const auto& r : records) out << format_record(r) << '\n';
  if (!out) throw IoError("failed writing dataset " + path.string());
}

std::size_t IdMap::lookup(const std::string& id) const {
  auto it = index.find(id);
  return it == index.end() ? kUnknown : it->second;
}

IdMap build_id_map(const std::vector<const std::vector<InteractionRecord>*>& parts, bool users) {
  std::set<std::string> ids;
  for (const auto* part : parts)
    for (const auto& r : *part) ids.insert(users ? r.user : r.item);
  IdMap map;
  std::size_t next = 1;
  for (const auto& id : ids) map.index.emplace(id, next++);
  return map;
}

DatasetSplit split_records(const std::vector<InteractionRecord>& records, std::uint64_t seed) {
  if (records.size() < 10) {
    throw DataError("split needs at least 10 records, got " + std::to_string(records.size()));
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);

  const std::size_t n_valid = records.size() / 10, n_test = records.size() / 10;
  const std::size_t n_train = records.size() - n_valid - n_test;
  DatasetSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = records[order[i]];
    if (i < n_train) split.train.push_back(r);
    else if (i < n_train + n_valid) split.valid.push_back(r);
    else split.test.push_back(r);
  }
  split.users = build_id_map({&split.train, &split.valid, &split.test}, true);
  split.items = build_id_map({&split.train, &split.valid, &split.test}, false);
  return split;
}

SparsityBuckets sparsity_buckets(const std::vector<InteractionRecord>& test,
                                 const std::vector<InteractionRecord>& train) {
  if (test.empty()) throw DataError("sparsity buckets need a non-empty test set");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& r : train) ++freq[r.user];
  SparsityBuckets out;
  out.user_frequency.resize(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto it = freq.find(test[i].user);
    out.user_frequency[i] = it == freq.end() ? 0 : it->second;
  }
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (out.user_frequency[a] != out.user_frequency[b]) return out.user_frequency[a] > out.user_frequency[b];
    return test[a].user < test[b].user;
  });
  const std::size_t n = test.size();
  std::size_t pos = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const std::size_t size = n / 3 + (b < n % 3 ? 1 : 0);
    out.members[b].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                          order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

void save_labels(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::size_t>>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write labels " + path.string());
  for (const auto& [user, cluster] : labels) out << user << '\t' << cluster << '\n';
}

std::map<std::string, std::size_t> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open labels " + path.string());
  std::map<std::string, std::size_t> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("labels line " + std::to_string(n) + ": expected user<TAB>cluster");
    try {
      out[line.substr(0, tab)] = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError("labels line " + std::to_string(n) + ": bad cluster index");
    }
  }
  return out;
}

DatasetStats dataset_stats(const std::vector<InteractionRecord>& records) {
  std::set<std::string> users, items, features;
  for (const auto& r : records) {
    users.insert(r.user);
    items.insert(r.item);
    features.insert(r.features.begin(), r.features.end());
  }
  return DatasetStats{users.size(), items.size(), records.size(), features.size()};
}

}  // namespace xmoe::data
