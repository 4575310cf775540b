// Copyright 2026 The EARN Authors.
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

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "earn/csv.hpp"
#include "earn/pool.hpp"
#include "testing.hpp"

namespace earn::cli {
namespace {

namespace fs = std::filesystem;
using ::testing::HasSubstr;
using earn::testing::read_file;
using earn::testing::TempDir;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto r = invoke({"--seed", "1", "-o", pool_dir().string(), "pool", "synth", "--models", "8",
                           "--samples", "500", "--classes", "10"});
    ASSERT_EQ(r.code, kSuccess) << r.err;
  }
  fs::path pool_dir() const { return dir_.path() / "pool"; }
  fs::path manifest() const { return pool_dir() / "pool.json"; }
  fs::path path(const std::string& name) const { return dir_.path() / name; }

  std::vector<std::string> quick_search(const std::string& out, std::uint64_t seed) const {
    return {"--seed", std::to_string(seed), "-o", path(out).string(), "search", manifest().string(),
            "--population", "40", "--offspring", "20", "--iterations", "8"};
  }

 private:
  TempDir dir_;
};

TEST_F(CliTest, PoolValidatePrintsOneLinePerModel) {
  const auto r = invoke({"pool", "validate", manifest().string()});
  EXPECT_EQ(r.code, kSuccess);
  EXPECT_EQ(count_lines(r.out), 8u);
  EXPECT_THAT(r.out, HasSubstr("m0 params="));
  EXPECT_THAT(r.out, HasSubstr("val_acc="));
  EXPECT_THAT(r.out, HasSubstr("test_acc="));
  EXPECT_THAT(r.out, HasSubstr("gpu_latency_s="));
}

TEST_F(CliTest, PoolValidateCorruptedMagic) {
  {
    std::fstream f(pool_dir() / "m3_test.eprd", std::ios::in | std::ios::out | std::ios::binary);
    f.write("BAD!", 4);
  }
  const auto r = invoke({"pool", "validate", manifest().string()});
  EXPECT_EQ(r.code, kDataError);
  EXPECT_THAT(r.err, HasSubstr("m3_test.eprd"));
}

TEST_F(CliTest, PoolSplitAndImport) {
  const auto probs = pool_dir() / "m0_val.eprd";
  const auto labels = pool_dir() / "m0_val.elbl";
  const auto prefix = path("half").string();
  auto r = invoke({"--seed", "3", "pool", "split", "--probs", probs.string(), "--labels",
                   labels.string(), "--out-prefix", prefix});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(read_predictions(prefix + ".a.eprd").n_samples + read_predictions(prefix + ".b.eprd").n_samples,
            500u);

  std::ofstream(path("p.csv")) << "0.5,0.5\n0.9,0.1\n";
  std::ofstream(path("l.csv")) << "1\n0\n";
  r = invoke({"pool", "import-csv", "--probs-csv", path("p.csv").string(), "--labels-csv",
              path("l.csv").string(), "--out-probs", path("p.eprd").string(), "--out-labels",
              path("p.elbl").string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(read_labels(path("p.elbl")), (std::vector<std::uint32_t>{1, 0}));
}

TEST_F(CliTest, SearchWritesArtifacts) {
  const auto r = invoke(quick_search("run", 42));
  ASSERT_EQ(r.code, kSuccess) << r.err;
  for (const char* name : {"archive.json", "archive.csv", "history.csv", "population.json",
                           "run_manifest.json"}) {
    EXPECT_TRUE(fs::exists(path("run") / name)) << name;
  }
  EXPECT_EQ(count_lines(read_file(path("run") / "history.csv")), 1u + 8u + 1u);
  const auto manifest = nlohmann::json::parse(read_file(path("run") / "run_manifest.json"));
  EXPECT_EQ(manifest["config"]["seed"], 42);
  EXPECT_EQ(manifest["config"]["population_limit"], 40);
  EXPECT_EQ(manifest["context"]["platform"], "cpu");
}

TEST_F(CliTest, SearchIsByteIdenticalAcrossRunsAndJobs) {
  ASSERT_EQ(invoke(quick_search("a", 42)).code, kSuccess);
  auto args = quick_search("b", 42);
  args.insert(args.begin(), {"--jobs", "8"});
  ASSERT_EQ(invoke(args).code, kSuccess);
  for (const char* name : {"archive.csv", "history.csv", "archive.json", "population.json"}) {
    EXPECT_EQ(read_file(path("a") / name), read_file(path("b") / name)) << name;
  }
}

TEST_F(CliTest, ManifestReproducesRun) {
  ASSERT_EQ(invoke(quick_search("first", 5)).code, kSuccess);
  const auto r = invoke({"-o", path("replay").string(), "search", "--manifest",
                         (path("first") / "run_manifest.json").string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(read_file(path("first") / "archive.csv"), read_file(path("replay") / "archive.csv"));
  EXPECT_EQ(read_file(path("first") / "history.csv"), read_file(path("replay") / "history.csv"));
}

TEST_F(CliTest, SearchWithConfigFile) {
  std::ofstream(path("config.json")) << R"({"population_limit": 30, "offspring_limit": 10, "iterations": 4})";
  const auto r = invoke({"-o", path("cfg").string(), "search", manifest().string(), "--config",
                         path("config.json").string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(count_lines(read_file(path("cfg") / "history.csv")), 1u + 4u + 1u);
  std::ofstream(path("bad.json")) << R"({"popsize": 30})";
  EXPECT_EQ(invoke({"-o", path("bad").string(), "search", manifest().string(), "--config",
                    path("bad.json").string()})
                .code,
            kUsage);
}

TEST_F(CliTest, ObjectiveSubsetHasArityTwo) {
  auto args = quick_search("sub", 3);
  args.insert(args.end(), {"--objectives", "error,size"});
  ASSERT_EQ(invoke(args).code, kSuccess);
  const auto j = nlohmann::json::parse(read_file(path("sub") / "archive.json"));
  ASSERT_FALSE(j.empty());
  for (const auto& e : j) EXPECT_EQ(e["objectives"].size(), 2u);
}

TEST_F(CliTest, InvalidNamesAreUsageErrors) {
  auto args = quick_search("x", 1);
  args.insert(args.end(), {"--objectives", "error,speed"});
  EXPECT_EQ(invoke(args).code, kUsage);
  args = quick_search("y", 1);
  args.insert(args.end(), {"--platform", "tpu"});
  EXPECT_EQ(invoke(args).code, kUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kUsage);
  EXPECT_EQ(invoke({"search", manifest().string(), "--population", "-3"}).code, kUsage);
  EXPECT_EQ(invoke({}).code, kUsage);
}

TEST_F(CliTest, EvalMatchesPoolAndArchive) {
  std::ofstream(path("single.json")) << R"({"kind":"classifier","model":"m2"})";
  auto r = invoke({"eval", path("single.json").string(), "--pool", manifest().string(), "--split", "test"});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  const auto pool = load_pool(manifest());
  auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["error"].get<double>(), 1.0 - accuracy(pool.models[2].test), 1e-15);
  EXPECT_EQ(j["latency_s"].get<double>(), pool.models[2].latencies.at("cpu"));
  EXPECT_EQ(j["size_params"].get<double>(), static_cast<double>(pool.models[2].param_count));

  ASSERT_EQ(invoke(quick_search("run", 9)).code, kSuccess);
  std::ifstream in(path("run") / "archive.csv");
  std::string line;
  std::getline(in, line);
  std::size_t checked = 0;
  while (std::getline(in, line)) {
    const auto cells = csv_split(line);
    std::ofstream(path("g.json")) << cells[3];
    r = invoke({"eval", path("g.json").string(), "--pool", manifest().string()});
    ASSERT_EQ(r.code, kSuccess) << r.err;
    j = nlohmann::json::parse(r.out);
    EXPECT_EQ(format_real(j["error"].get<double>()), cells[0]);
    EXPECT_EQ(format_real(j["latency_s"].get<double>()), cells[1]);
    EXPECT_EQ(format_real(j["size_params"].get<double>()), cells[2]);
    ++checked;
  }
  EXPECT_GT(checked, 0u);
}

TEST_F(CliTest, EvalUnknownModel) {
  std::ofstream(path("bad.json")) << R"({"kind":"classifier","model":"nope"})";
  const auto r = invoke({"eval", path("bad.json").string(), "--pool", manifest().string()});
  EXPECT_EQ(r.code, kDataError);
  EXPECT_THAT(r.err, HasSubstr("nope"));
}

TEST_F(CliTest, EnumerateChainRowCount) {
  TempDir four;
  ASSERT_EQ(invoke({"-o", four.path().string(), "pool", "synth", "--models", "4", "--samples", "50",
                    "--classes", "3"})
                .code,
            kSuccess);
  const auto r = invoke({"enumerate", "--pool", (four.path() / "pool.json").string(), "--strategy",
                         "chain2", "--csv", path("chains.csv").string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(count_lines(read_file(path("chains.csv"))), 1u + 600u);
  const auto s = invoke({"enumerate", "--pool", (four.path() / "pool.json").string(), "--strategy",
                         "bagging", "--k", "3"});
  ASSERT_EQ(s.code, kSuccess);
  EXPECT_EQ(count_lines(s.out), 1u + 4u * 3u);
  EXPECT_EQ(invoke({"enumerate", "--pool", (four.path() / "pool.json").string(), "--strategy", "stack"})
                .code,
            kUsage);
}

TEST_F(CliTest, ReportWritesFrontsAndSummary) {
  ASSERT_EQ(invoke(quick_search("run", 2)).code, kSuccess);
  ASSERT_EQ(invoke({"enumerate", "--pool", manifest().string(), "--strategy", "boosting", "--k", "2",
                    "--include-singles", "--csv", path("boost.csv").string()})
                .code,
            kSuccess);
  const auto r = invoke({"-o", path("rep").string(), "report", (path("run") / "archive.csv").string(),
                         path("boost.csv").string(), "--pool", manifest().string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_THAT(r.out, HasSubstr("reference m"));
  EXPECT_THAT(r.out, HasSubstr("ensemble B"));
  for (const char* name : {"front_error_vs_latency.csv", "front_error_vs_size.csv",
                           "front_latency_vs_size.csv", "summary.txt"}) {
    EXPECT_TRUE(fs::exists(path("rep") / name)) << name;
  }
  EXPECT_EQ(read_file(path("rep") / "summary.txt"), r.out);
}

TEST_F(CliTest, HelpAndVersion) {
  auto r = invoke({"--help"});
  EXPECT_EQ(r.code, kSuccess);
  EXPECT_THAT(r.out, HasSubstr("search"));
  r = invoke({"--version"});
  EXPECT_EQ(r.code, kSuccess);
  EXPECT_THAT(r.out, HasSubstr(kVersion));
}

}  // namespace
}  // namespace earn::cli
