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

#include "xmoe/cli/app.hpp"

#include <algorithm>
#include <map>

#include <CLI11.hpp>

#include "xmoe/cli/commands.hpp"
#include "xmoe/errors.hpp"

namespace xmoe::cli {

namespace {

// Config file plus one `--key` flag per setting. Values are applied after
// parsing so flags win over the file regardless of their position.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> single;
  std::map<std::string, std::vector<std::string>> multi;
  bool f64 = false;

  void attach(CLI::App& sub) {
    sub.add_option("--config", file, "TOML config file")->check(CLI::ExistingFile);
    for (const auto& s : settings()) {
      if (s.list) sub.add_option("--" + s.key, multi[s.key], s.help);
      else sub.add_option("--" + s.key, single[s.key], s.help);
    }
    sub.add_flag("--f64-checkpoint", f64, "write 64-bit checkpoint payloads");
  }

  RunConfig resolve(const CLI::App& sub) const {
    RunConfig config;
    if (!file.empty()) apply_config_file(config, file);
    for (const auto& s : settings()) {
      if (sub.count("--" + s.key) == 0) continue;
      if (s.list) apply_setting(config, s.key, multi.at(s.key));
      else apply_setting(config, s.key, {single.at(s.key)});
    }
    if (f64) config.f64_checkpoint = true;
    return config;
  }
};

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SequencingError*>(&e)) return kExitUsage;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const LookupError*>(&e) || dynamic_cast<const ContextError*>(&e)) {
    return kExitData;
  }
  return kExitTraining;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cluster-gated mixture-of-experts explanation generator"};
  app.name("xmoe");
  app.require_subcommand(1);

  ConfigFlags synth_flags, train_flags;
  auto* synth = app.add_subcommand("synth", "generate a planted-cluster corpus");
  synth_flags.attach(*synth);

  int stage = 0;
  auto* train = app.add_subcommand("train", "run the rating stage (1) or explanation stage (2)");
  train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train_flags.attach(*train);

  GenerateRequest gen;
  std::string mode = "greedy";
  std::optional<double> rating;
  auto* generate = app.add_subcommand("generate", "explain one user-item pair");
  generate->add_option("--checkpoint", gen.checkpoint, "stage-2 checkpoint")->required();
  generate->add_option("--user", gen.user, "user id")->required();
  generate->add_option("--item", gen.item, "item id")->required();
  generate->add_option("--rating", rating, "rating for the prompt; predicted when omitted");
  generate->add_option("--features", gen.features, "comma-separated features")->delimiter(',');
  generate->add_option("--mode", mode, "greedy or sample")->check(CLI::IsMember({"greedy", "sample"}));
  generate->add_option("--temperature", gen.options.temperature, "sampling temperature");
  generate->add_option("--seed", gen.options.seed, "sampling seed");
  generate->add_option("--max-len", gen.options.max_len, "token cap");

  EvaluateRequest ev;
  auto* evaluate = app.add_subcommand("evaluate", "score the held-out split");
  evaluate->add_option("--checkpoint", ev.checkpoint, "stage-2 checkpoint")->required();
  evaluate->add_option("--dataset", ev.dataset, "dataset the model was trained on")->required();
  evaluate->add_flag("--buckets", ev.buckets, "also report three user-frequency buckets");
  evaluate->add_option("--threads", ev.threads, "generation threads")->check(CLI::PositiveNumber);
  evaluate->add_option("--json", ev.json, "report path (default <checkpoint>.report.json)");
  evaluate->add_option("--dump", ev.dump, "per-record JSONL output");
  evaluate->add_flag("--sentence-bleu", ev.sentence_bleu, "average sentence-level BLEU");
  evaluate->add_flag("--distinct-per-sentence", ev.distinct_per_sentence, "average Distinct-n per sentence");

  InspectRequest ins;
  auto* inspect = app.add_subcommand("inspect-clusters", "summarize the learned mixture");
  inspect->add_option("--checkpoint", ins.checkpoint, "stage-1 or stage-2 checkpoint")->required();
  inspect->add_option("--dataset", ins.dataset, "records to encode")->required();
  inspect->add_option("--labels", ins.labels, "user -> cluster sidecar");
  inspect->add_option("--pca", ins.pca_csv, "write 2-D PCA coordinates as CSV");

  std::vector<std::string> suites;
  bool verbose = false;
  auto* verify = app.add_subcommand("verify", "run the oracle and property suites");
  verify->add_option("--suite", suites, "grads, kl, vae, moe, routing, metrics or decoupling (default: all)");
  verify->add_flag("-v,--verbose", verbose, "print every check");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      cmd_synth(synth_flags.resolve(*synth), out);
    } else if (train->parsed()) {
      cmd_train(train_flags.resolve(*train), stage, out, err);
    } else if (generate->parsed()) {
      gen.rating = rating;
      gen.options.mode = mode == "sample" ? moe::DecodeMode::kSample : moe::DecodeMode::kGreedy;
      cmd_generate(gen, out, err);
    } else if (evaluate->parsed()) {
      cmd_evaluate(ev, out);
    } else if (inspect->parsed()) {
      cmd_inspect_clusters(ins, out);
    } else if (verify->parsed()) {
      if (!cmd_verify(suites, verbose, out)) return kExitVerify;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace xmoe::cli
