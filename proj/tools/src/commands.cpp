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

#include "xmoe/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <Eigen/Dense>

#include "xmoe/errors.hpp"
#include "xmoe/eval/evaluate.hpp"
#include "xmoe/eval/metrics.hpp"
#include "xmoe/io/checkpoint.hpp"
#include "xmoe/io/manifest.hpp"
#include "xmoe/oracles/suites.hpp"

namespace xmoe::cli {

namespace {

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

template <typename T>
std::string list(const std::vector<T>& v, int digits = 4) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>) s += fmt(v[i], digits);
    else s += std::to_string(v[i]);
  }
  return s + "]";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string epoch_line(const training::EpochLog& e) {
  std::string s = e.phase + " epoch " + std::to_string(e.epoch) + ": loss " + fmt(e.loss) + " recon " +
                  fmt(e.reconstruction) + " kl " + fmt(e.kl);
  if (e.phase == "stage2") s += " nll " + fmt(e.nll);
  if (!std::isnan(e.valid_loss)) s += " valid " + fmt(e.valid_loss);
  if (!e.occupancy.empty()) s += " occupancy " + list(e.occupancy);
  return s;
}

training::Model load_at_stage(const std::filesystem::path& path, int min_stage, const std::string& why) {
  training::Model model = io::load_checkpoint(path);
  if (model.stage < min_stage) {
    throw SequencingError(path.string() + " is a stage-" + std::to_string(model.stage) + " checkpoint; " + why);
  }
  return model;
}

double norm_between(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

void cmd_synth(const RunConfig& config, std::ostream& out) {
  if (config.out.empty()) throw ConfigError("field 'out': synth needs an output path");
  const auto corpus = data::generate_synthetic(config.synth);
  const std::filesystem::path labels = config.labels.empty() ? config.out + ".labels.tsv" : config.labels;
  data::save_records(config.out, corpus.records);
  data::save_labels(labels, corpus.user_clusters);
  const auto stats = data::dataset_stats(corpus.records);
  const std::vector<std::string> head = {"dataset", "#users", "#items", "#records", "#features"};
  const std::vector<std::string> row = {"synthetic", std::to_string(stats.users), std::to_string(stats.items),
                                        std::to_string(stats.records), std::to_string(stats.features)};
  for (const auto* r : {&head, &row}) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %8s %8s %9s %10s\n", (*r)[0].c_str(), (*r)[1].c_str(), (*r)[2].c_str(),
                  (*r)[3].c_str(), (*r)[4].c_str());
    out << line;
  }
  out << "planted clusters: " << corpus.spec.clusters << ", seed " << corpus.spec.seed << "\n";
  out << "wrote " << config.out << " and " << labels.string() << "\n";
}

void cmd_train(const RunConfig& config, int stage, std::ostream& out, std::ostream& err) {
  if (stage != 1 && stage != 2) throw ConfigError("field 'stage': expected 1 or 2, got " + std::to_string(stage));
  config.validate();
  if (config.dataset.empty()) throw ConfigError("field 'dataset': train needs a dataset");
  if (config.out.empty()) throw ConfigError("field 'out': train needs a checkpoint path");
  if (stage == 2 && config.init.empty()) {
    throw SequencingError("stage 2 needs a stage-1 checkpoint (--init)");
  }
  const auto t0 = std::chrono::steady_clock::now();

  training::Model model;
  if (stage == 1) {
    model.seed = config.seed;
  } else {
    model = load_at_stage(config.init, 1, "stage 2 continues a stage-1 model");
    if (config.gates && *config.gates != model.config.clusters) {
      throw ConfigError("gates (" + std::to_string(*config.gates) + ") must equal the checkpoint's clusters (" +
                        std::to_string(model.config.clusters) + ")");
    }
  }
  const std::uint64_t seed = stage == 1 ? config.seed : model.seed;
  const data::DatasetSplit split = load_split(config.dataset, seed);
  if (stage == 1) model = training::build_model(config.model, split, seed);

  training::StageConfig sc = stage == 1 ? config.stage1 : config.stage2;
  sc.stage = stage;
  sc.seed = seed;
  auto log = [&](const training::EpochLog& e) { out << epoch_line(e) << "\n" << std::flush; };
  const training::TrainHistory history = stage == 1
                                             ? training::train_stage1(model, split.train, sc, &split.valid, log)
                                             : training::train_stage2(model, split.train, sc, &split.valid, log);
  if (history.early_stopped) out << "early stop after " << history.epochs.size() << " epochs\n";

  io::save_checkpoint(config.out, model, config.f64_checkpoint ? io::Dtype::kF64 : io::Dtype::kF32);
  io::RunManifest manifest;
  manifest.stage = stage;
  manifest.seed = seed;
  manifest.dataset = config.dataset;
  manifest.checkpoint = config.out;
  manifest.parent_checkpoint = stage == 2 ? config.init : "";
  manifest.model = model.config;
  manifest.config = sc;
  manifest.history = history;
  manifest.train_records = split.train.size();
  manifest.valid_records = split.valid.size();
  manifest.test_records = split.test.size();
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_run_manifest(config.out + ".manifest.json", manifest);

  out << "clusters K=" << model.config.clusters << ", gates=" << model.lm.config().moe.gates
      << ", experts=" << model.lm.config().moe.expert_count() << "\n";
  if (!config.labels.empty()) {
    std::vector<data::InteractionRecord> all = split.train;
    all.insert(all.end(), split.valid.begin(), split.valid.end());
    all.insert(all.end(), split.test.begin(), split.test.end());
    const auto labels = data::load_labels(config.labels);
    const auto report = inspect_clusters(model, all, &labels);
    if (report.ari) out << "user ARI " << fmt(*report.ari) << ", purity " << fmt(*report.purity) << "\n";
    else err << "warning: no labelled users found in the dataset\n";
  }
  out << "wrote " << config.out << " (" << fmt(manifest.wall_seconds, 1) << " s)\n";
}

void cmd_generate(const GenerateRequest& request, std::ostream& out, std::ostream& err) {
  const training::Model model = load_at_stage(request.checkpoint, 2, "generation needs a stage-2 model");
  if (!model.users.contains(request.user)) err << "warning: unknown user '" << request.user << "', using UNK\n";
  if (!model.items.contains(request.item)) err << "warning: unknown item '" << request.item << "', using UNK\n";
  NoGradGuard no_grad;
  auto [mu, log_var] = vae::encode(model.vae, model.users.lookup(request.user), model.items.lookup(request.item));
  const auto posterior = vae::gmm_posterior(model.vae.prior, mu.value().values());
  const std::size_t gate = vae::assign_cluster(posterior);
  const double predicted = vae::decode(model.vae.decoder, mu).item() * model.config.rating_max;
  data::InteractionRecord record{request.user, request.item, request.rating.value_or(predicted), request.features,
                                 "-"};
  if (record.rating <= 0.0 || record.rating > model.config.rating_max) {
    throw DataError("rating must lie in (0, " + fmt(model.config.rating_max, 1) + "]");
  }
  const auto prompt = training::prompt_tokens(model, record);
  moe::GenerateOptions g = request.options;
  g.max_len = std::min(g.max_len, model.config.max_explanation);
  const std::string text = model.vocab.decode(moe::generate(model.lm, prompt, gate, g));
  out << "gate: " << gate << "\n";
  out << "gamma: " << list(posterior.gamma) << "\n";
  out << "rating: " << fmt(record.rating, 2) << (request.rating ? "" : " (predicted)") << "\n";
  out << "explanation: " << text << "\n";
}

void cmd_evaluate(const EvaluateRequest& request, std::ostream& out) {
  const training::Model model = load_at_stage(request.checkpoint, 2, "evaluation needs a stage-2 model");
  const data::DatasetSplit split = load_split(request.dataset, model.seed);
  if (split.test.empty()) throw DataError("evaluation: empty test split");
  eval::EvalOptions options;
  options.buckets = request.buckets;
  options.threads = request.threads;
  options.sentence_bleu = request.sentence_bleu;
  options.distinct_per_sentence = request.distinct_per_sentence;
  std::vector<eval::GeneratedOutput> outputs;
  const auto report = eval::evaluate_model(model, split.test, &split.train, options, &outputs);
  const std::filesystem::path json =
      request.json.empty() ? std::filesystem::path(request.checkpoint.string() + ".report.json") : request.json;
  write_text(json, eval::report_json(report) + "\n");
  if (!request.dump.empty()) write_text(request.dump, eval::records_jsonl(split.test, outputs));
  out << eval::report_table(report);
  out << "wrote " << json.string() << (request.dump.empty() ? "" : " and " + request.dump.string()) << "\n";
}

Tensor pca_2d(const Tensor& points) {
  const std::size_t n = points.rows(), d = points.cols();
  if (n == 0 || d == 0) throw DimensionError("pca_2d: empty input");
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = points.at(i, j);
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(std::max<std::size_t>(1, n - 1));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  Tensor out({n, 2});
  for (std::size_t c = 0; c < 2 && c < d; ++c) {
    // Eigenvalues ascend; take the largest two.
    Eigen::VectorXd axis = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - c));
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    const Eigen::VectorXd proj = x * axis;
    for (std::size_t i = 0; i < n; ++i) out.at(i, c) = proj(static_cast<Eigen::Index>(i));
  }
  return out;
}

ClusterInspection inspect_clusters(const training::Model& model, const std::vector<data::InteractionRecord>& records,
                                   const std::map<std::string, std::size_t>* labels) {
  if (records.empty()) throw DataError("inspect-clusters: no records");
  const std::size_t k = model.config.clusters;
  ClusterInspection r;
  const Tensor means = training::encoder_means(model, records);
  const auto assigned = training::record_clusters(model, records);
  const Tensor pi = model.vae.prior.pi();
  const Tensor& centres = model.vae.prior.mu.value();
  const std::size_t d = centres.cols();
  r.pi.assign(pi.values().begin(), pi.values().end());
  r.occupancy.assign(k, 0);
  std::vector<double> dist_sum(k, 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t c = assigned[i];
    ++r.occupancy[c];
    dist_sum[c] += norm_between(means.values().subspan(i * d, d), centres.values().subspan(c * d, d));
  }
  r.intra_distance.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    r.intra_distance[c] = r.occupancy[c] ? dist_sum[c] / static_cast<double>(r.occupancy[c]) : std::nan("");
  }
  r.centroid_distance.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      r.centroid_distance[a][b] = r.centroid_distance[b][a] =
          norm_between(centres.values().subspan(a * d, d), centres.values().subspan(b * d, d));
  if (labels) {
    std::set<std::string> seen;
    std::vector<std::string> users;
    std::vector<std::size_t> truth;
    for (const auto& rec : records) {
      const auto it = labels->find(rec.user);
      if (it != labels->end() && seen.insert(rec.user).second) {
        users.push_back(rec.user);
        truth.push_back(it->second);
      }
    }
    r.labelled_users = users.size();
    if (!users.empty()) {
      const auto predicted = training::user_clusters(model, records, users);
      r.ari = eval::adjusted_rand_index(predicted, truth);
      r.purity = eval::purity(predicted, truth);
    }
  }
  return r;
}

void cmd_inspect_clusters(const InspectRequest& request, std::ostream& out) {
  const training::Model model = load_at_stage(request.checkpoint, 1, "cluster inspection needs a trained prior");
  const auto records = data::load_records(request.dataset);
  std::optional<std::map<std::string, std::size_t>> labels;
  if (!request.labels.empty()) labels = data::load_labels(request.labels);
  const auto r = inspect_clusters(model, records, labels ? &*labels : nullptr);
  const std::size_t k = r.pi.size();
  out << "clusters K=" << k << ", records " << records.size() << "\n";
  out << "cluster  records  share    pi      intra\n";
  for (std::size_t c = 0; c < k; ++c) {
    char line[128];
    std::snprintf(line, sizeof line, "%7zu  %7zu  %5.1f%%  %6.4f  %7.4f\n", c, r.occupancy[c],
                  100.0 * static_cast<double>(r.occupancy[c]) / static_cast<double>(records.size()), r.pi[c],
                  r.intra_distance[c]);
    out << line;
  }
  out << "component-mean distances:\n";
  for (const auto& row : r.centroid_distance) out << "  " << list(row) << "\n";
  if (labels) {
    if (r.ari) {
      out << "labelled users " << r.labelled_users << ": ARI " << fmt(*r.ari) << ", purity " << fmt(*r.purity)
          << "\n";
    } else {
      out << "no labelled users in the dataset\n";
    }
  }
  if (!request.pca_csv.empty()) {
    const Tensor coords = pca_2d(training::encoder_means(model, records));
    const auto assigned = training::record_clusters(model, records);
    std::string csv = "user,item,cluster,pc1,pc2\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
      csv += records[i].user + "," + records[i].item + "," + std::to_string(assigned[i]) + "," +
             fmt(coords.at(i, 0), 6) + "," + fmt(coords.at(i, 1), 6) + "\n";
    }
    write_text(request.pca_csv, csv);
    out << "wrote " << request.pca_csv.string() << "\n";
  }
}

bool cmd_verify(const std::vector<std::string>& suites, bool verbose, std::ostream& out) {
  const std::vector<std::string> names = suites.empty() ? oracles::suite_names() : suites;
  for (const auto& n : names) {
    const auto all = oracles::suite_names();
    if (std::find(all.begin(), all.end(), n) == all.end()) {
      throw ConfigError("unknown suite '" + n + "' (choose from grads, kl, vae, moe, routing, metrics, decoupling)");
    }
  }
  bool ok = true;
  for (const auto& n : names) {
    const auto report = oracles::run_suite(n);
    for (const auto& c : report.checks) {
      if (verbose || !c.passed) {
        out << (c.passed ? "  ok   " : "  FAIL ") << n << "/" << c.name << ": " << c.value << " (limit " << c.limit
            << ")" << (c.detail.empty() ? "" : " " + c.detail) << "\n";
      }
    }
    out << (report.passed() ? "PASS " : "FAIL ") << n << ": " << report.checks.size() - report.failures() << "/"
        << report.checks.size() << " checks in " << fmt(report.seconds, 2) << " s\n";
    ok = ok && report.passed();
  }
  return ok;
}

}  // namespace xmoe::cli
