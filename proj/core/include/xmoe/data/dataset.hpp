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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace xmoe::data {

struct InteractionRecord {
  std::string user;
  std::string item;
  double rating = 0.0;
  std::vector<std::string> features;
  std::string explanation;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

/// Parses one JSON object with exactly the keys user, item, rating,
/// features, explanation. Errors name `line_number`.
InteractionRecord parse_record(std::string_view line, std::size_t line_number);
std::string format_record(const InteractionRecord& record);

/// One record per line; blank lines are skipped. DataError names the line.
std::vector<InteractionRecord> load_records(const std::filesystem::path& path);
void save_records(const std::filesystem::path& path, const std::vector<InteractionRecord>& records);

/// Ids are numbered 1..n in lexicographic order; 0 is the UNK row.
struct IdMap {
  std::map<std::string, std::size_t> index;
  static constexpr std::size_t kUnknown = 0;

  std::size_t rows() const noexcept { return index.size() + 1; }
  /// kUnknown for ids never seen.
  std::size_t lookup(const std::string& id) const;
  bool contains(const std::string& id) const { return index.count(id) > 0; }
};

struct DatasetSplit {
  std::vector<InteractionRecord> train;
  std::vector<InteractionRecord> valid;
  std::vector<InteractionRecord> test;
  IdMap users;  // built from train + valid + test
  IdMap items;
};

/// Seeded Fisher-Yates shuffle, then floor(n/10) validation and floor(n/10)
/// test records; the remainder trains. Needs at least 10 records.
DatasetSplit split_records(const std::vector<InteractionRecord>& records, std::uint64_t seed);

IdMap build_id_map(const std::vector<const std::vector<InteractionRecord>*>& parts, bool users);

struct SparsityBuckets {
  // Indices into the test records; bucket 0 = ds1 (most frequent users).
  std::array<std::vector<std::size_t>, 3> members;
  // Training-set frequency of each test record's user.
  std::vector<std::size_t> user_frequency;
};

/// Orders test records by their user's training frequency (descending),
/// ties by user id then original position, and cuts three contiguous groups
/// whose sizes differ by at most one (earlier groups take the remainder).
SparsityBuckets sparsity_buckets(const std::vector<InteractionRecord>& test,
                                 const std::vector<InteractionRecord>& train);

// ---- synthetic corpus with planted clusters ---------------------------------

struct SynthSpec {
  std::size_t clusters = 3;
  std::size_t users = 300;
  std::size_t items = 100;
  std::size_t records_per_user = 20;
  std::size_t features_per_record = 2;
  double noise = 0.1;          // probability a feature comes from another cluster
  double rating_noise = 0.3;   // std-dev of Gaussian rating noise
  double item_effect = 0.25;   // item offsets drawn from U(-item_effect, item_effect)
  std::uint64_t seed = 7;
  // Per-cluster signature lexicons and rating biases; filled with defaults by
  // resolved() when empty.
  std::vector<std::vector<std::string>> lexicons;
  std::vector<double> rating_bias;

  /// Copy with defaults filled in; throws ConfigError on inconsistent fields.
  SynthSpec resolved() const;
};

struct SyntheticCorpus {
  std::vector<InteractionRecord> records;
  std::vector<std::pair<std::string, std::size_t>> user_clusters;  // sidecar
  SynthSpec spec;                                                  // as resolved
};

/// Pure function of the SynthSpec, seed included.
SyntheticCorpus generate_synthetic(const SynthSpec& spec);

/// Lines "user<TAB>cluster".
void save_labels(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::size_t>>& labels);
std::map<std::string, std::size_t> load_labels(const std::filesystem::path& path);

struct DatasetStats {
  std::size_t users = 0, items = 0, records = 0, features = 0;
};
DatasetStats dataset_stats(const std::vector<InteractionRecord>& records);

}  // namespace xmoe::data
