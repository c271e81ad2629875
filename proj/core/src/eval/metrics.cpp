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

#include "xmoe/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "xmoe/errors.hpp"

namespace xmoe::eval {

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, std::size_t> ngram_counts(const Tokens& t, int n) {
  std::map<NGram, std::size_t> out;
  const auto len = static_cast<std::size_t>(n);
  if (t.size() < len) return out;
  for (std::size_t i = 0; i + len <= t.size(); ++i) ++out[NGram(t.begin() + i, t.begin() + i + len)];
  return out;
}

struct BleuCounts {
  std::vector<double> matched, total;
  double cand_len = 0.0, ref_len = 0.0;
  explicit BleuCounts(int n) : matched(n, 0.0), total(n, 0.0) {}
};

void check_order(int n) {
  if (n < 1 || n > 4) throw MetricError("bleu: order must lie in 1..4, got " + std::to_string(n));
}

void accumulate(BleuCounts& acc, const Tokens& cand, const Tokens& ref, int n) {
  if (ref.empty()) throw MetricError("bleu: empty reference");
  acc.cand_len += static_cast<double>(cand.size());
  acc.ref_len += static_cast<double>(ref.size());
  for (int k = 1; k <= n; ++k) {
    const auto c = ngram_counts(cand, k), r = ngram_counts(ref, k);
    for (const auto& [g, cnt] : c) {
      acc.total[k - 1] += static_cast<double>(cnt);
      auto it = r.find(g);
      if (it != r.end()) acc.matched[k - 1] += static_cast<double>(std::min(cnt, it->second));
    }
  }
}

double finish(const BleuCounts& acc, int n) {
  if (acc.cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    // Orders longer than the candidate have no n-grams; they count as a
    // zero match against a zero total.
    const double m = acc.matched[k] > 0.0 ? acc.matched[k] : kBleuEpsilon;
    const double t = acc.total[k] > 0.0 ? acc.total[k] : 1.0;
    log_sum += std::log(m / t);
  }
  const double bp = acc.cand_len < acc.ref_len ? std::exp(1.0 - acc.ref_len / acc.cand_len) : 1.0;
  return bp * std::exp(log_sum / n);
}

void check_pairs(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw MetricError(std::string(what) + ": candidate and reference counts differ");
  if (a == 0) throw MetricError(std::string(what) + ": no pairs to score");
}

}  // namespace

double bleu_n(const Tokens& candidate, const Tokens& reference, int n) {
  check_order(n);
  BleuCounts acc(n);
  accumulate(acc, candidate, reference, n);
  return finish(acc, n);
}

double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n) {
  check_order(n);
  check_pairs(candidates.size(), references.size(), "bleu");
  BleuCounts acc(n);
  for (std::size_t i = 0; i < candidates.size(); ++i) accumulate(acc, candidates[i], references[i], n);
  return finish(acc, n);
}

double sentence_bleu_mean(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n) {
  check_pairs(candidates.size(), references.size(), "bleu");
  double s = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) s += bleu_n(candidates[i], references[i], n);
  return s / static_cast<double>(candidates.size());
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScores rouge_scores(const Tokens& candidate, const Tokens& reference) {
  if (reference.empty()) throw MetricError("rouge: empty reference");
  if (candidate.empty()) return {};
  auto f1 = [&](double overlap) {
    if (overlap == 0.0) return 0.0;
    const double p = overlap / static_cast<double>(candidate.size());
    const double r = overlap / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
  };
  const auto c = ngram_counts(candidate, 1), r = ngram_counts(reference, 1);
  double overlap = 0.0;
  for (const auto& [g, cnt] : c) {
    auto it = r.find(g);
    if (it != r.end()) overlap += static_cast<double>(std::min(cnt, it->second));
  }
  return {f1(overlap), f1(static_cast<double>(lcs_length(candidate, reference)))};
}

RougeScores rouge_corpus(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  check_pairs(candidates.size(), references.size(), "rouge");
  RougeScores sum;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto s = rouge_scores(candidates[i], references[i]);
    sum.rouge1 += s.rouge1;
    sum.rougeL += s.rougeL;
  }
  const auto n = static_cast<double>(candidates.size());
  return {sum.rouge1 / n, sum.rougeL / n};
}

double distinct_n(const std::vector<Tokens>& corpus, int n, bool per_sentence) {
  if (n < 1 || n > 2) throw MetricError("distinct: order must be 1 or 2");
  if (per_sentence) {
    double s = 0.0;
    std::size_t texts = 0;
    for (const auto& t : corpus) {
      const auto counts = ngram_counts(t, n);
      if (counts.empty()) continue;
      s += static_cast<double>(counts.size()) / static_cast<double>(t.size() - static_cast<std::size_t>(n) + 1);
      ++texts;
    }
    return texts == 0 ? 0.0 : s / static_cast<double>(texts);
  }
  std::set<NGram> unique;
  std::size_t total = 0;
  for (const auto& t : corpus) {
    for (const auto& [g, cnt] : ngram_counts(t, n)) {
      unique.insert(g);
      total += cnt;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw MetricError("rmse: length mismatch");
  if (predicted.empty()) throw MetricError("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predicted.size()));
}

double adjusted_rand_index(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size()) throw MetricError("ari: length mismatch");
  const std::size_t n = predicted.size();
  if (n < 2) return 1.0;
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    table[{predicted[i], truth[i]}] += 1.0;
    rows[predicted[i]] += 1.0;
    cols[truth[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, a = 0.0, b = 0.0;
  for (const auto& [k, v] : table) index += c2(v);
  for (const auto& [k, v] : rows) a += c2(v);
  for (const auto& [k, v] : cols) b += c2(v);
  const double expected = a * b / c2(static_cast<double>(n));
  const double max_index = 0.5 * (a + b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double purity(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size()) throw MetricError("purity: length mismatch");
  if (predicted.empty()) throw MetricError("purity: empty input");
  std::map<std::size_t, std::map<std::size_t, std::size_t>> by_cluster;
  for (std::size_t i = 0; i < predicted.size(); ++i) ++by_cluster[predicted[i]][truth[i]];
  std::size_t hit = 0;
  for (const auto& [c, counts] : by_cluster) {
    std::size_t best = 0;
    for (const auto& [t, k] : counts) best = std::max(best, k);
    hit += best;
  }
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

}  // namespace xmoe::eval
