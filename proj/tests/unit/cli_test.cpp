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

#include <sstream>

#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "xmoe/cli/app.hpp"
#include "xmoe/cli/commands.hpp"
#include "xmoe/cli/run_config.hpp"
#include "xmoe/errors.hpp"
#include "xmoe/io/checkpoint.hpp"

namespace xmoe::cli {
namespace {

using testing::TempDir;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kSmallConfig = R"(seed = 5

[model]
embedding_dim = 6
latent_dim = 3
encoder_hidden = 8
decoder_hidden = 6
clusters = 2
model_dim = 8
blocks = 1
heads = 2
context = 32
base_experts = 2
base_hidden = 8
factor = 2
top_k = 2
max_explanation = 16

[synth]
clusters = 2
users = 12
items = 8
records_per_user = 5

[stage1]
epochs = 3
batch_size = 16

[stage2]
epochs = 1
batch_size = 4
grad_accum_steps = 2
)";

TEST(RunConfig, TomlSectionsAndFlagsOverride) {
  RunConfig c;
  apply_config_text(c, kSmallConfig);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.model.base_hidden, 8u);
  EXPECT_EQ(c.synth.users, 12u);
  EXPECT_EQ(c.stage2.grad_accum_steps, 2u);
  EXPECT_EQ(c.stage2.lr, training::StageConfig::desk_stage2().lr);
  apply_setting(c, "model.encoder", {"attention"});
  EXPECT_EQ(c.model.encoder, vae::EncoderKind::kAttention);
  apply_setting(c, "synth.rating_bias", {"1", "4.5"});
  EXPECT_EQ(c.synth.rating_bias, (std::vector<double>{1.0, 4.5}));
  apply_setting(c, "stage1.freeze_gmm", {"true"});
  EXPECT_TRUE(c.stage1.freeze_gmm);
}

TEST(RunConfig, UnknownAndMistypedFieldsNameTheField) {
  RunConfig c;
  try {
    apply_config_text(c, "[model]\nclustres = 3\n", "run.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.toml"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("model.clustres"), std::string::npos);
  }
  try {
    apply_setting(c, "stage1.lr", {"fast"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stage1.lr"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("fast"), std::string::npos);
  }
  EXPECT_THROW(apply_setting(c, "model.encoder", {"lstm"}), ConfigError);
  EXPECT_THROW(apply_setting(c, "threads", {"-2"}), ConfigError);
}

TEST(RunConfig, ValidateCatchesGateMismatch) {
  RunConfig c;
  c.gates = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c.gates = c.model.clusters;
  EXPECT_NO_THROW(c.validate());
  c.threads = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, DataSeedIsDerivedFromRoot) {
  EXPECT_EQ(data_seed(42), data_seed(42));
  EXPECT_NE(data_seed(42), data_seed(43));
}

TEST(Cli, ParseErrorsAndHelp) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({"train"}).code, kExitUsage);  // --stage is required
  EXPECT_EQ(cli({"train", "--stage", "3"}).code, kExitUsage);
  const auto help = cli({"--help"});
  EXPECT_EQ(help.code, kExitOk);
  EXPECT_NE(help.out.find("inspect-clusters"), std::string::npos);
}

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
  TempDir dir;
  const auto a = cli({"synth", "--out", (dir / "a.jsonl").string()});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_NE(a.out.find("6000"), std::string::npos);
  EXPECT_NE(a.out.find("planted clusters: 3"), std::string::npos);
  ASSERT_EQ(cli({"synth", "--out", (dir / "b.jsonl").string()}).code, kExitOk);
  EXPECT_EQ(testing::read_file(dir / "a.jsonl"), testing::read_file(dir / "b.jsonl"));
  EXPECT_EQ(testing::read_file(dir / "a.jsonl.labels.tsv"), testing::read_file(dir / "b.jsonl.labels.tsv"));
  const auto stats = data::dataset_stats(data::load_records(dir / "a.jsonl"));
  EXPECT_EQ(stats.users, 300u);
  EXPECT_EQ(stats.items, 100u);
}

TEST(Cli, ConfigErrorsExitOne) {
  TempDir dir;
  testing::write_file(dir / "bad.toml", "[model]\nclusters = 3\n");
  const auto r = cli({"train", "--stage", "1", "--config", (dir / "bad.toml").string(), "--gates", "2", "--dataset",
                      "x.jsonl", "--out", (dir / "m").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("gates"), std::string::npos);
  testing::write_file(dir / "typo.toml", "[stage1]\nepoch = 3\n");
  EXPECT_EQ(cli({"synth", "--config", (dir / "typo.toml").string(), "--out", (dir / "d").string()}).code, kExitUsage);
}

TEST(Cli, StageTwoWithoutInitExitsOne) {
  TempDir dir;
  ASSERT_EQ(cli({"synth", "--config", "/dev/null", "--synth.users", "12", "--synth.items", "8",
                 "--synth.records_per_user", "5", "--out", (dir / "d.jsonl").string()})
                .code,
            kExitOk);
  const auto r = cli({"train", "--stage", "2", "--dataset", (dir / "d.jsonl").string(), "--out",
                      (dir / "m").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--init"), std::string::npos);
}

TEST(Cli, MissingDatasetExitsTwo) {
  TempDir dir;
  const auto r = cli({"train", "--stage", "1", "--dataset", (dir / "none.jsonl").string(), "--out",
                      (dir / "m").string()});
  EXPECT_EQ(r.code, kExitData);
  testing::write_file(dir / "broken.jsonl", "{\"user\": 1}\n");
  EXPECT_EQ(cli({"train", "--stage", "1", "--dataset", (dir / "broken.jsonl").string(), "--out",
                 (dir / "m").string()})
                .code,
            kExitData);
}

TEST(Cli, VerifySuiteSelection) {
  const auto ok = cli({"verify", "--suite", "kl"});
  EXPECT_EQ(ok.code, kExitOk) << ok.out;
  EXPECT_NE(ok.out.find("PASS kl"), std::string::npos);
  EXPECT_EQ(cli({"verify", "--suite", "nope"}).code, kExitUsage);
}

// One small end-to-end run shared by the pipeline tests below.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    testing::write_file(*dir_ / "run.toml", kSmallConfig);
    const std::string cfg = (*dir_ / "run.toml").string();
    auto must = [](const Result& r) {
      ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
    };
    must(cli({"synth", "--config", cfg, "--out", path("d.jsonl")}));
    must(cli({"train", "--stage", "1", "--config", cfg, "--dataset", path("d.jsonl"), "--labels",
              path("d.jsonl.labels.tsv"), "--out", path("s1.ckpt")}));
    must(cli({"train", "--stage", "2", "--config", cfg, "--dataset", path("d.jsonl"), "--init", path("s1.ckpt"),
              "--out", path("s2.ckpt")}));
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& name) { return (*dir_ / name).string(); }
  static TempDir* dir_;
};
TempDir* Pipeline::dir_ = nullptr;

TEST_F(Pipeline, TrainWritesManifests) {
  const auto m1 = nlohmann::json::parse(testing::read_file(path("s1.ckpt.manifest.json")));
  EXPECT_EQ(m1["stage"], 1);
  EXPECT_EQ(m1["gates"], 2);
  const auto m2 = nlohmann::json::parse(testing::read_file(path("s2.ckpt.manifest.json")));
  EXPECT_EQ(m2["stage"], 2);
  EXPECT_EQ(m2["parent_checkpoint"], path("s1.ckpt"));
  EXPECT_EQ(io::inspect_checkpoint(path("s2.ckpt")).stage, 2);
}

TEST_F(Pipeline, EvaluateWithBucketsWritesThreeRows) {
  const auto r = cli({"evaluate", "--checkpoint", path("s2.ckpt"), "--dataset", path("d.jsonl"), "--buckets",
                      "--threads", "2", "--dump", path("dump.jsonl")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* row : {"\nall ", "\nds1 ", "\nds2 ", "\nds3 ", "BERTScore", "ds3/ds1 BLEU-4 ratio"})
    EXPECT_NE(r.out.find(row), std::string::npos) << row;
  const auto j = nlohmann::json::parse(testing::read_file(path("s2.ckpt.report.json")));
  ASSERT_EQ(j["buckets"].size(), 3u);
  std::size_t pairs = 0;
  for (const auto& b : j["buckets"]) pairs += b["pairs"].get<std::size_t>();
  EXPECT_EQ(pairs, j["overall"]["pairs"].get<std::size_t>());
  EXPECT_EQ(j["gates"], 2);
  const auto dump = testing::read_file(path("dump.jsonl"));
  EXPECT_EQ(static_cast<std::size_t>(std::count(dump.begin(), dump.end(), '\n')), pairs);
}

TEST_F(Pipeline, EvaluateRejectsStageOneCheckpoint) {
  EXPECT_EQ(cli({"evaluate", "--checkpoint", path("s1.ckpt"), "--dataset", path("d.jsonl")}).code, kExitUsage);
}

TEST_F(Pipeline, GenerateWarnsOnUnknownUser) {
  const auto r = cli({"generate", "--checkpoint", path("s2.ckpt"), "--user", "ghost", "--item", "3", "--features",
                      "spicy,curry"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.err.find("unknown user 'ghost'"), std::string::npos);
  EXPECT_NE(r.out.find("(predicted)"), std::string::npos);
  EXPECT_NE(r.out.find("explanation: "), std::string::npos);
  const auto given = cli({"generate", "--checkpoint", path("s2.ckpt"), "--user", "1", "--item", "3", "--rating",
                          "4", "--mode", "sample", "--seed", "3"});
  ASSERT_EQ(given.code, kExitOk) << given.err;
  EXPECT_TRUE(given.err.empty());
  EXPECT_NE(given.out.find("rating: 4.00\n"), std::string::npos);
  EXPECT_EQ(cli({"generate", "--checkpoint", path("s1.ckpt"), "--user", "1", "--item", "3"}).code, kExitUsage);
}

TEST_F(Pipeline, InspectClustersWithPca) {
  const auto r = cli({"inspect-clusters", "--checkpoint", path("s1.ckpt"), "--dataset", path("d.jsonl"), "--labels",
                      path("d.jsonl.labels.tsv"), "--pca", path("pca.csv")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("clusters K=2, records 60"), std::string::npos);
  EXPECT_NE(r.out.find("labelled users 12"), std::string::npos);
  const auto csv = testing::read_file(path("pca.csv"));
  EXPECT_EQ(csv.rfind("user,item,cluster,pc1,pc2\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 61u);
}

TEST(InspectClusters, SingleComponentHoldsEverything) {
  const auto split = data::split_records(data::generate_synthetic(testing::small_spec()).records, 5);
  auto m = training::build_model(testing::small_model(1), split, 2);
  auto c = training::StageConfig::desk_stage1();
  c.epochs = 1;
  training::train_stage1(m, split.train, c);
  const auto r = inspect_clusters(m, split.train, nullptr);
  ASSERT_EQ(r.pi.size(), 1u);
  EXPECT_DOUBLE_EQ(r.pi[0], 1.0);
  EXPECT_EQ(r.occupancy[0], split.train.size());
  EXPECT_FALSE(r.ari.has_value());
}

TEST(Pca, RecoversDominantAxis) {
  Tensor pts({4, 3});
  const double xs[] = {-3.0, -1.0, 1.0, 3.0};
  for (std::size_t i = 0; i < 4; ++i) {
    pts[3 * i + 0] = xs[i];
    pts[3 * i + 1] = 2.0 * xs[i];
    pts[3 * i + 2] = (i == 0 || i == 3) ? 0.1 : -0.1;  // uncorrelated with the main axis
  }
  const Tensor p = pca_2d(pts);
  ASSERT_EQ(p.rows(), 4u);
  ASSERT_EQ(p.cols(), 2u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(std::abs(p[2 * i]), std::abs(xs[i]) * std::sqrt(5.0), 1e-9);
    EXPECT_NEAR(std::abs(p[2 * i + 1]), 0.1, 1e-9);
  }
}

}  // namespace
}  // namespace xmoe::cli
