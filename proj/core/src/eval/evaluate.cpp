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

#include "xmoe/eval/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <thread>

#include <nlohmann/json.hpp>

#include "xmoe/data/tokenize.hpp"
#include "xmoe/errors.hpp"
#include "xmoe/eval/metrics.hpp"

namespace xmoe::eval {

namespace {

using json = nlohmann::ordered_json;

GeneratedOutput generate_one(const training::Model& model, const data::InteractionRecord& r,
                             const EvalOptions& options) {
  NoGradGuard no_grad;
  GeneratedOutput out;
  const auto prompt = training::prompt_tokens(model, r);
  for (std::size_t i = 0; i < prompt.size(); ++i) out.prompt += (i ? " " : "") + model.vocab.token(prompt[i]);
  const std::size_t user = model.users.lookup(r.user), item = model.items.lookup(r.item);
  auto [mu, log_var] = vae::encode(model.vae, user, item);
  out.gate = vae::assign_cluster(vae::gmm_posterior(model.vae.prior, mu.value().values()));
  out.rating = vae::decode(model.vae.decoder, mu).item();
  out.target = r.rating / model.config.rating_max;
  moe::GenerateOptions g = options.generate;
  g.max_len = std::min(g.max_len, model.config.max_explanation);
  out.text = model.vocab.decode(moe::generate(model.lm, prompt, out.gate, g));
  return out;
}

MetricRow score_rows(const std::string& name, const std::vector<data::InteractionRecord>& records,
                     const std::vector<GeneratedOutput>& outputs, const std::vector<std::size_t>& members,
                     const EvalOptions& options) {
  MetricRow row;
  row.name = name;
  row.pairs = members.size();
  if (members.empty()) return row;
  std::vector<Tokens> cands, refs;
  std::vector<double> pred, truth;
  for (std::size_t i : members) {
    cands.push_back(data::tokenize(outputs[i].text));
    refs.push_back(data::tokenize(records[i].explanation));
    pred.push_back(outputs[i].rating);
    truth.push_back(outputs[i].target);
  }
  if (options.sentence_bleu) {
    row.bleu1 = sentence_bleu_mean(cands, refs, 1);
    row.bleu4 = sentence_bleu_mean(cands, refs, 4);
  } else {
    row.bleu1 = corpus_bleu(cands, refs, 1);
    row.bleu4 = corpus_bleu(cands, refs, 4);
  }
  const auto rouge = rouge_corpus(cands, refs);
  row.rouge1 = rouge.rouge1;
  row.rougeL = rouge.rougeL;
  row.distinct1 = distinct_n(cands, 1, options.distinct_per_sentence);
  row.distinct2 = distinct_n(cands, 2, options.distinct_per_sentence);
  row.rmse = rmse(pred, truth);
  return row;
}

json row_json(const MetricRow& r, bool bucket) {
  json j;
  j["name"] = r.name;
  j["pairs"] = r.pairs;
  j["bleu1"] = 100.0 * r.bleu1;
  j["bleu4"] = 100.0 * r.bleu4;
  j["rouge1"] = 100.0 * r.rouge1;
  j["rougeL"] = 100.0 * r.rougeL;
  j["distinct1"] = 100.0 * r.distinct1;
  j["distinct2"] = 100.0 * r.distinct2;
  j["bertscore"] = "n/a";
  j["rmse"] = r.rmse;
  if (bucket) {
    j["min_user_frequency"] = r.min_user_frequency;
    j["max_user_frequency"] = r.max_user_frequency;
  }
  return j;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<GeneratedOutput> generate_outputs(const training::Model& model,
                                              const std::vector<data::InteractionRecord>& records,
                                              const EvalOptions& options) {
  std::vector<GeneratedOutput> out(records.size());
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, records.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) out[i] = generate_one(model, records[i], options);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < records.size(); i += threads) out[i] = generate_one(model, records[i], options);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

MetricReport score_outputs(const std::vector<data::InteractionRecord>& records,
                           const std::vector<GeneratedOutput>& outputs,
                           const std::vector<data::InteractionRecord>* train, const EvalOptions& options) {
  if (records.empty()) throw DataError("evaluation: no records to score");
  if (records.size() != outputs.size()) throw MetricError("evaluation: output count differs from record count");
  MetricReport report;
  report.bleu_mode = options.sentence_bleu ? "sentence" : "corpus";
  report.distinct_mode = options.distinct_per_sentence ? "sentence" : "corpus";
  std::vector<std::size_t> all(records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  report.overall = score_rows("all", records, outputs, all, options);
  if (options.buckets) {
    if (!train) throw DataError("evaluation: sparsity buckets need the training records");
    const auto b = data::sparsity_buckets(records, *train);
    for (std::size_t k = 0; k < 3; ++k) {
      MetricRow row = score_rows("ds" + std::to_string(k + 1), records, outputs, b.members[k], options);
      if (!b.members[k].empty()) {
        row.min_user_frequency = row.max_user_frequency = b.user_frequency[b.members[k].front()];
        for (std::size_t i : b.members[k]) {
          row.min_user_frequency = std::min(row.min_user_frequency, b.user_frequency[i]);
          row.max_user_frequency = std::max(row.max_user_frequency, b.user_frequency[i]);
        }
      }
      report.buckets.push_back(row);
    }
    if (report.buckets[0].bleu4 > 0.0) report.bucket_bleu4_ratio = report.buckets[2].bleu4 / report.buckets[0].bleu4;
  }
  return report;
}

MetricReport evaluate_model(const training::Model& model, const std::vector<data::InteractionRecord>& test,
                            const std::vector<data::InteractionRecord>* train, const EvalOptions& options,
                            std::vector<GeneratedOutput>* outputs) {
  if (model.stage < 2) throw SequencingError("evaluation needs a model that finished the explanation stage");
  if (test.empty()) throw DataError("evaluation: empty test split");
  auto generated = generate_outputs(model, test, options);
  MetricReport report = score_outputs(test, generated, train, options);
  report.clusters = model.config.clusters;
  report.gates = model.lm.config().moe.gates;
  report.experts = model.lm.config().moe.expert_count();
  report.top_k = model.lm.config().moe.top_k;
  report.stage = model.stage;
  report.gate_histogram.assign(report.gates, 0);
  for (const auto& g : generated) ++report.gate_histogram.at(g.gate);
  if (outputs) *outputs = std::move(generated);
  return report;
}

std::string report_json(const MetricReport& report) {
  json j;
  j["units"] = "text metrics in percent; rmse on normalized ratings";
  j["bleu_mode"] = report.bleu_mode;
  j["distinct_mode"] = report.distinct_mode;
  j["clusters"] = report.clusters;
  j["gates"] = report.gates;
  j["experts"] = report.experts;
  j["top_k"] = report.top_k;
  j["stage"] = report.stage;
  j["gate_histogram"] = report.gate_histogram;
  j["overall"] = row_json(report.overall, false);
  if (!report.buckets.empty()) {
    json rows = json::array();
    for (const auto& r : report.buckets) rows.push_back(row_json(r, true));
    j["buckets"] = rows;
    j["ds3_ds1_bleu4_ratio"] = report.bucket_bleu4_ratio ? json(*report.bucket_bleu4_ratio) : json(nullptr);
  }
  return j.dump(2);
}

std::string report_table(const MetricReport& report) {
  const std::vector<std::string> head = {"set",  "pairs",     "BLEU-1",    "BLEU-4",    "ROUGE-1",
                                         "ROUGE-L", "Distinct-1", "Distinct-2", "BERTScore", "RMSE"};
  std::vector<std::vector<std::string>> rows{head};
  auto add = [&](const MetricRow& r) {
    rows.push_back({r.name, std::to_string(r.pairs), fixed(100 * r.bleu1, 3), fixed(100 * r.bleu4, 3),
                    fixed(100 * r.rouge1, 3), fixed(100 * r.rougeL, 3), fixed(100 * r.distinct1, 3),
                    fixed(100 * r.distinct2, 3), "n/a", fixed(r.rmse, 4)});
  };
  add(report.overall);
  for (const auto& r : report.buckets) add(r);
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string pad(width[c] - r[c].size(), ' ');
      out += c == 0 ? r[c] + pad : "  " + pad + r[c];
    }
    out += '\n';
  }
  if (report.gates) {
    out += "clusters K=" + std::to_string(report.clusters) + ", gates=" + std::to_string(report.gates) +
           ", experts=" + std::to_string(report.experts) + ", top-k=" + std::to_string(report.top_k) + "\n";
  }
  if (!report.buckets.empty()) {
    out += "ds3/ds1 BLEU-4 ratio: " + (report.bucket_bleu4_ratio ? fixed(*report.bucket_bleu4_ratio, 4) : "n/a") + "\n";
  }
  return out;
}

std::string records_jsonl(const std::vector<data::InteractionRecord>& records,
                          const std::vector<GeneratedOutput>& outputs) {
  if (records.size() != outputs.size()) throw MetricError("records_jsonl: output count differs from record count");
  std::string out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    json j;
    j["user"] = records[i].user;
    j["item"] = records[i].item;
    j["prompt"] = outputs[i].prompt;
    j["generated"] = outputs[i].text;
    j["reference"] = records[i].explanation;
    j["gate"] = outputs[i].gate;
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace xmoe::eval
