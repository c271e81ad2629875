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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "xmoe/data/dataset.hpp"
#include "xmoe/data/tokenize.hpp"
#include "xmoe/errors.hpp"
#include "xmoe/eval/evaluate.hpp"
#include "xmoe/eval/metrics.hpp"
#include "xmoe/numerics/rng.hpp"
#include "xmoe/oracles/reference.hpp"

namespace xmoe::eval {
namespace {

Tokens words(const char* s) { return data::tokenize(s); }

Tokens random_sentence(Rng& r, std::size_t vocab, std::size_t max_len) {
  Tokens t(1 + r.uniform_index(max_len));
  for (auto& w : t) w = "w" + std::to_string(r.uniform_index(vocab));
  return t;
}

TEST(Bleu, WorkedExampleWithBrevityPenalty) {
  const auto cand = words("the cat sat"), ref = words("the cat sat on the mat");
  EXPECT_NEAR(bleu_n(cand, ref, 1), std::exp(-1.0), 1e-12);
  EXPECT_DOUBLE_EQ(bleu_n(ref, ref, 4), 1.0);
  EXPECT_DOUBLE_EQ(bleu_n({}, ref, 1), 0.0);
}

TEST(Bleu, ClippedCountsAndBadInputs) {
  // "the the the" against "the cat": one clipped match out of three.
  EXPECT_NEAR(bleu_n(words("the the the"), words("the cat"), 1), 1.0 / 3.0, 1e-12);
  EXPECT_THROW(bleu_n(words("a"), {}, 1), MetricError);
  EXPECT_THROW(bleu_n(words("a"), words("a"), 5), MetricError);
  EXPECT_THROW(corpus_bleu({words("a")}, {}, 1), MetricError);
  EXPECT_THROW(corpus_bleu({}, {}, 1), MetricError);
}

TEST(Bleu, MatchesNaiveOracleOnRandomCorpora) {
  Rng r(101);
  for (int t = 0; t < 30; ++t) {
    std::vector<Tokens> c, ref;
    for (std::size_t i = 0, n = 1 + r.uniform_index(6); i < n; ++i) {
      c.push_back(random_sentence(r, 5, 9));
      ref.push_back(random_sentence(r, 5, 9));
    }
    for (int n = 1; n <= 4; ++n) EXPECT_NEAR(corpus_bleu(c, ref, n), oracles::naive_bleu(c, ref, n), 1e-12);
  }
}

TEST(Rouge, WorkedExample) {
  const auto s = rouge_scores(words("the cat sat"), words("the cat sat on the mat"));
  EXPECT_NEAR(s.rouge1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.rougeL, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(lcs_length(words("a b c d"), words("b d a c")), 2u);
  EXPECT_DOUBLE_EQ(rouge_scores({}, words("x")).rouge1, 0.0);
  EXPECT_THROW(rouge_scores(words("x"), {}), MetricError);
}

TEST(Rouge, MatchesNaiveOracleAndStaysInUnitInterval) {
  Rng r(55);
  for (int t = 0; t < 200; ++t) {
    const auto a = random_sentence(r, 4, 8), b = random_sentence(r, 4, 8);
    const auto s = rouge_scores(a, b);
    EXPECT_NEAR(s.rouge1, oracles::naive_rouge1(a, b), 1e-12);
    EXPECT_NEAR(s.rougeL, oracles::naive_rougeL(a, b), 1e-12);
    EXPECT_LE(s.rougeL, s.rouge1 + 1e-12);  // an LCS is a bag of unigram matches
    EXPECT_GE(s.rougeL, 0.0);
    EXPECT_LE(s.rouge1, 1.0);
  }
}

TEST(Distinct, PoolsAcrossCorpusOrAveragesPerSentence) {
  const std::vector<Tokens> corpus = {words("a a b"), words("b c")};
  EXPECT_DOUBLE_EQ(distinct_n(corpus, 1), 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(distinct_n(corpus, 2), 1.0);
  EXPECT_DOUBLE_EQ(distinct_n(corpus, 1, true), (2.0 / 3.0 + 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(distinct_n({}, 1), 0.0);
  EXPECT_THROW(distinct_n(corpus, 3), MetricError);
  Rng r(8);
  for (int t = 0; t < 20; ++t) {
    std::vector<Tokens> c;
    for (int i = 0; i < 4; ++i) c.push_back(random_sentence(r, 6, 7));
    EXPECT_NEAR(distinct_n(c, 1), oracles::naive_distinct(c, 1), 1e-12);
    EXPECT_NEAR(distinct_n(c, 2), oracles::naive_distinct(c, 2), 1e-12);
  }
}

TEST(Rmse, MatchesTwoPassOracle) {
  const std::vector<double> p = {0.1, 0.5, 0.9}, y = {0.0, 0.5, 1.0};
  EXPECT_NEAR(rmse(p, y), std::sqrt(0.02 / 3.0), 1e-15);
  EXPECT_NEAR(rmse(p, y), oracles::two_pass_rmse(p, y), 1e-15);
  EXPECT_THROW(rmse(p, std::vector<double>{1.0}), MetricError);
  EXPECT_THROW(rmse({}, {}), MetricError);
}

// Properties: ARI is 1 on identical partitions, ignores label names, is
// symmetric and agrees with direct pair counting.
TEST(Ari, Properties) {
  Rng r(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + r.uniform_index(30);
    std::vector<std::size_t> a(n), b(n), renamed(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = r.uniform_index(4);
      b[i] = r.uniform_index(3);
      renamed[i] = 10 - a[i];
    }
    EXPECT_DOUBLE_EQ(adjusted_rand_index(a, a), 1.0);
    EXPECT_NEAR(adjusted_rand_index(renamed, a), 1.0, 1e-12);
    EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(b, a), 1e-12);
    EXPECT_NEAR(adjusted_rand_index(a, b), oracles::pair_counting_ari(a, b), 1e-12);
  }
}

TEST(Ari, KnownValuesAndPurity) {
  const std::vector<std::size_t> truth = {0, 0, 0, 1, 1, 1};
  const std::vector<std::size_t> one(6, 0);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(one, truth), 0.0);
  // Pairs: index 2, rows 3, cols 6, n choose 2 = 15.
  const std::vector<std::size_t> p = {0, 0, 1, 1, 2, 2};
  EXPECT_NEAR(adjusted_rand_index(p, truth), (2.0 - 18.0 / 15.0) / (4.5 - 18.0 / 15.0), 1e-12);
  EXPECT_DOUBLE_EQ(purity(p, truth), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(purity(one, truth), 0.5);
  EXPECT_THROW(adjusted_rand_index(p, std::vector<std::size_t>{0, 1}), MetricError);
}

std::vector<data::InteractionRecord> fixture() {
  std::vector<data::InteractionRecord> rs;
  const char* texts[] = {"the noodles were spicy", "quiet garden and nice view", "staff were helpful at checkin",
                         "the broth tasted rich", "cozy decor with music", "parking was easy"};
  for (int i = 0; i < 6; ++i) rs.push_back({"u" + std::to_string(i % 3), "i" + std::to_string(i), 4.0, {}, texts[i]});
  return rs;
}

TEST(ScoreOutputs, EchoingReferencesScoresPerfectly) {
  const auto rs = fixture();
  std::vector<GeneratedOutput> out;
  for (const auto& r : rs) out.push_back({"", r.explanation, 0, 0.75, 0.75});
  EvalOptions opts;
  const auto report = score_outputs(rs, out, nullptr, opts);
  EXPECT_DOUBLE_EQ(report.overall.bleu1, 1.0);
  EXPECT_DOUBLE_EQ(report.overall.bleu4, 1.0);
  EXPECT_DOUBLE_EQ(report.overall.rougeL, 1.0);
  EXPECT_DOUBLE_EQ(report.overall.rmse, 0.0);
  EXPECT_EQ(report.overall.pairs, 6u);
  const auto j = nlohmann::json::parse(report_json(report));
  EXPECT_DOUBLE_EQ(j["overall"]["bleu1"].get<double>(), 100.0);
  EXPECT_EQ(j["overall"]["bertscore"], "n/a");
  EXPECT_EQ(j["bleu_mode"], "corpus");
  EXPECT_FALSE(j.contains("buckets"));
}

TEST(ScoreOutputs, BucketRowsNeedTrainingRecords) {
  const auto rs = fixture();
  std::vector<GeneratedOutput> out;
  for (const auto& r : rs) out.push_back({"", r.explanation, 0, 0.5, 0.5});
  EvalOptions opts;
  opts.buckets = true;
  EXPECT_THROW(score_outputs(rs, out, nullptr, opts), DataError);
  const std::vector<data::InteractionRecord> train = {rs[0], rs[0], rs[1]};
  const auto report = score_outputs(rs, out, &train, opts);
  ASSERT_EQ(report.buckets.size(), 3u);
  for (const auto& b : report.buckets) EXPECT_EQ(b.pairs, 2u);
  EXPECT_EQ(report.buckets[0].name, "ds1");
  EXPECT_EQ(report.buckets[0].min_user_frequency, 2u);
  EXPECT_EQ(report.buckets[2].max_user_frequency, 0u);
  ASSERT_TRUE(report.bucket_bleu4_ratio.has_value());
  EXPECT_DOUBLE_EQ(*report.bucket_bleu4_ratio, 1.0);
  out.pop_back();
  EXPECT_THROW(score_outputs(rs, out, &train, opts), MetricError);
}

TEST(ScoreOutputs, JsonlDumpHasOneLinePerRecord) {
  const auto rs = fixture();
  std::vector<GeneratedOutput> out(rs.size(), GeneratedOutput{"<u> x", "hello", 1, 0.1, 0.2});
  const auto text = records_jsonl(rs, out);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), rs.size());
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(first["generated"], "hello");
  EXPECT_EQ(first["reference"], rs[0].explanation);
}

}  // namespace
}  // namespace xmoe::eval
