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
#include <span>
#include <string>
#include <vector>

namespace xmoe::eval {

using Tokens = std::vector<std::string>;

inline constexpr double kBleuEpsilon = 1e-9;

/// Single-pair BLEU: clipped n-gram precisions for orders 1..n, geometric
/// mean, brevity penalty exp(1 - r/c) when c < r. Zero matches count as
/// epsilon. An empty candidate scores 0; an empty reference throws.
double bleu_n(const Tokens& candidate, const Tokens& reference, int n);

/// Corpus BLEU: clipped counts and lengths are summed over all pairs before
/// the precisions and brevity penalty are formed.
double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n);

/// Mean of per-pair bleu_n.
double sentence_bleu_mean(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n);

struct RougeScores {
  double rouge1 = 0.0;  // unigram-overlap F1
  double rougeL = 0.0;  // LCS F1
};
RougeScores rouge_scores(const Tokens& candidate, const Tokens& reference);

/// Mean over pairs.
RougeScores rouge_corpus(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// Unique n-grams over total n-grams pooled across the corpus; 0 when there
/// are no n-grams. With per_sentence, the ratio is averaged over texts that
/// hold at least one n-gram.
double distinct_n(const std::vector<Tokens>& corpus, int n, bool per_sentence = false);

double rmse(std::span<const double> predicted, std::span<const double> truth);

/// Pair-counting ARI from the contingency table; 1 for degenerate inputs
/// where both labelings agree trivially (e.g. one cluster each).
double adjusted_rand_index(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

/// Fraction of points whose predicted cluster's majority true label matches.
double purity(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

}  // namespace xmoe::eval
