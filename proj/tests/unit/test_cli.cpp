// Copyright 2026 The PerceptionLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <sys/wait.h>
#include <unistd.h>

#include "cli.hpp"
#include "perceptionlab/provider.hpp"
#include "support/test_support.hpp"

namespace perceptionlab::cli {
namespace {

using perceptionlab::testing::TempDir;

const std::string kAssets = PERCEPTIONLAB_ASSETS_DIR;
constexpr const char* kSecret = "sk-cli-SECRET-1b7e44d09ac35f21";

struct Result {
  int code = -1;
  std::string out;
  std::string err;
  Json doc;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  r.doc = Json::parse(r.out, nullptr, false);
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

TEST(CliCampaign, ValidateReportsCellsAndTasks) {
  const Result r = cli({"campaign", "validate", "--config", kAssets + "/campaign.json"});
  EXPECT_EQ(r.code, 0) << r.out;
  ASSERT_FALSE(r.doc.is_discarded()) << r.out;
  EXPECT_EQ(r.doc["cell_count"], 8);
  EXPECT_EQ(r.doc["task_count"], 24);
}

TEST(CliCampaign, InvalidConfigExitsOneWithViolations) {
  TempDir dir;
  Json doc = perceptionlab::testing::campaign_doc();
  doc["temperatures"] = {0.5, 3.0};
  doc["styles"] = Json::array();
  write(dir / "bad.json", doc.dump());
  const Result r = cli({"campaign", "validate", "--config", (dir / "bad.json").string()});
  EXPECT_EQ(r.code, 1);
  ASSERT_FALSE(r.doc.is_discarded());
  EXPECT_EQ(r.doc["violations"].size(), 2u);
  std::set<std::string> fields;
  for (const auto& v : r.doc["violations"]) fields.insert(v["field"].get<std::string>());
  EXPECT_EQ(fields, (std::set<std::string>{"styles", "temperatures"}));
}

TEST(CliUsage, CredentialFlagsDoNotExist) {
  for (const char* flag : {"--api-key", "--key", "--token"}) {
    const Result r = cli({"campaign", "run", "--config", kAssets + "/campaign.json", flag, kSecret});
    EXPECT_EQ(r.code, 1) << flag;
    EXPECT_EQ(r.doc["error_code"], "UsageError") << flag;
  }
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"campaign", "validate"}).doc["error_code"], "UsageError");
}

TEST(CliCampaign, MockRunIsIdempotentAndLogsAreReproducible) {
  TempDir a, b;
  const std::string config = kAssets + "/campaign.json";
  const Result first = cli({"campaign", "run", "--config", config, "--storage", a.str(), "--provider", "mock",
                            "--parallelism", "1", "--request-log", (a / "requests.log").string()});
  ASSERT_EQ(first.code, 0) << first.out << first.err;
  EXPECT_EQ(first.doc["generated"], 24);
  EXPECT_EQ(first.doc["failed"].size(), 0u);

  const Result again = cli({"campaign", "run", "--config", config, "--storage", a.str()});
  EXPECT_EQ(again.code, 0);
  EXPECT_EQ(again.doc["generated"], 0);
  EXPECT_EQ(again.doc["skipped"], 24);

  const Result other = cli({"campaign", "run", "--config", config, "--storage", b.str(), "--parallelism", "1",
                            "--request-log", (b / "requests.log").string()});
  ASSERT_EQ(other.code, 0);
  const std::string log = slurp(a / "requests.log");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 24);
  EXPECT_EQ(log, slurp(b / "requests.log"));
  EXPECT_EQ(slurp(a / "fragments.jsonl").size(), slurp(b / "fragments.jsonl").size());
}

TEST(CliCampaign, LiveModeNeedsKeyFromEnvironment) {
  ::unsetenv(provider::kApiKeyEnv);
  TempDir dir;
  Json doc = perceptionlab::testing::campaign_doc();
  doc["models"] = Json::array({{{"provider", "openai_compatible"}, {"model_name", "gpt-4o-mini"},
                                {"api_base", "http://127.0.0.1:9/v1"}}});
  write(dir / "live.json", doc.dump());
  const Result r = cli({"campaign", "run", "--config", (dir / "live.json").string(), "--storage",
                        (dir / "data").string(), "--provider", "live"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.doc["error_code"], "MissingField");
  EXPECT_NE(r.doc["message"].get<std::string>().find(provider::kApiKeyEnv), std::string::npos);
}

TEST(CliCampaign, LiveModeAgainstLocalEndpointNeverPrintsKey) {
  httplib::Server server;
  std::string seen_auth;
  std::mutex mu;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard<std::mutex> lock(mu);
      seen_auth = req.get_header_value("Authorization");
    }
    const Json body = Json::parse(req.body);
    const Json reply = {{"model", "gpt-4o-mini-2024-07-18"},
                        {"choices", Json::array({{{"message", {{"role", "assistant"},
                                                               {"content", "Headline for seed " +
                                                                               std::to_string(body["seed"].get<std::uint64_t>())}}},
                                                  {"finish_reason", "stop"}}})},
                        {"usage", {{"prompt_tokens", 30}, {"completion_tokens", 8}}}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  TempDir dir;
  Json doc = perceptionlab::testing::campaign_doc();
  doc["temperatures"] = {0.7};
  doc["styles"] = {"tabloid"};
  doc["replicates_per_cell"] = 2;
  doc["models"] = Json::array({{{"provider", "openai_compatible"}, {"model_name", "gpt-4o-mini"},
                                {"api_base", "http://127.0.0.1:" + std::to_string(port) + "/v1"}}});
  write(dir / "live.json", doc.dump());
  ::setenv(provider::kApiKeyEnv, kSecret, 1);
  const Result r = cli({"campaign", "run", "--config", (dir / "live.json").string(), "--storage",
                        (dir / "data").string(), "--provider", "live", "--requests-per-minute", "0"});
  ::unsetenv(provider::kApiKeyEnv);
  server.stop();
  t.join();

  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.doc["generated"], 2);
  EXPECT_EQ(seen_auth, std::string("Bearer ") + kSecret);
  EXPECT_NE(r.err.find("POST /v1/chat/completions"), std::string::npos);
  const std::string everything = r.out + r.err + slurp(dir / "data" / "fragments.jsonl") +
                                 slurp(dir / "data" / "campaigns.jsonl");
  EXPECT_EQ(everything.find(kSecret), std::string::npos);
  EXPECT_EQ(everything.find("sk-cli"), std::string::npos);
}

TEST(CliFragments, ImportThenReimport) {
  TempDir dir;
  const std::string in = kAssets + "/human_fragments.jsonl";
  const Result first = cli({"fragments", "import", "--in", in, "--storage", dir.str()});
  EXPECT_EQ(first.code, 0) << first.out;
  EXPECT_EQ(first.doc["imported"], 4);
  const Result second = cli({"fragments", "import", "--in", in, "--storage", dir.str()});
  EXPECT_EQ(second.doc["skipped_duplicate"], 4);

  write(dir / "mixed.jsonl", perceptionlab::testing::generated_fragment_doc("machine").dump() + "\n");
  const Result mixed = cli({"fragments", "import", "--in", (dir / "mixed.jsonl").string(), "--storage", dir.str()});
  EXPECT_EQ(mixed.code, 1);
  EXPECT_EQ(mixed.doc["rejected"][0]["reason"], "human import requires source=human");
}

TEST(CliAnalytics, SimulateThenReportRecoversPlantedValues) {
  TempDir dir;
  const Result sim = cli({"simulate", "--spec", kAssets + "/cohort.json", "--out", (dir / "cohort").string()});
  ASSERT_EQ(sim.code, 0) << sim.out;
  EXPECT_EQ(sim.doc["n_judgments"], 10000);
  for (const char* f : {"fragments.jsonl", "participants.jsonl", "sessions.jsonl", "judgments.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "cohort" / f)) << f;
  }
  const Result rep = cli({"report", "--in", (dir / "cohort").string(), "--out", (dir / "report.json").string(),
                          "--csv", (dir / "cells.csv").string()});
  ASSERT_EQ(rep.code, 0) << rep.out;
  ASSERT_FALSE(rep.doc.is_discarded());
  EXPECT_NEAR(rep.doc["dprime_origin"]["dprime"].get<double>(), 1.0, 0.05);
  EXPECT_NEAR(rep.doc["fatigue"]["delta_fake_pp"].get<double>(), -10.2, 0.5);
  EXPECT_EQ(Json::parse(slurp(dir / "report.json")), rep.doc);
  EXPECT_EQ(slurp(dir / "cells.csv").rfind("cell,n,accuracy\n", 0), 0u);

  const Result reseeded = cli({"simulate", "--spec", kAssets + "/cohort.json", "--seed", "43", "--out",
                               (dir / "other").string()});
  EXPECT_EQ(reseeded.doc["spec"]["seed"], 43);
  EXPECT_NE(slurp(dir / "cohort" / "judgments.jsonl"), slurp(dir / "other" / "judgments.jsonl"));
}

TEST(CliAnalytics, ReportOnMissingExportFails) {
  TempDir dir;
  const Result r = cli({"report", "--in", (dir / "absent").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(r.doc.is_discarded());
  EXPECT_TRUE(r.doc.contains("error_code"));
}

TEST(CliExport, AllCollectionsAndCampaignFilter) {
  TempDir dir;
  cli({"campaign", "run", "--config", kAssets + "/campaign.json", "--storage", (dir / "data").string()});
  cli({"fragments", "import", "--in", kAssets + "/human_fragments.jsonl", "--storage", (dir / "data").string()});
  const Result all = cli({"export", "--storage", (dir / "data").string(), "--out", (dir / "all").string()});
  ASSERT_EQ(all.code, 0) << all.out;
  EXPECT_EQ(all.doc["counts"]["fragments"], 28);
  for (const char* c : {"campaigns", "fragments", "participants", "sessions", "presentations", "judgments"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "all" / (std::string(c) + ".jsonl"))) << c;
  }
  const Result other = cli({"export", "--storage", (dir / "data").string(), "--out", (dir / "other").string(),
                            "--campaign-id", Uuid::from_name("unrelated").to_string()});
  EXPECT_EQ(other.doc["counts"]["fragments"], 4);
  EXPECT_EQ(other.doc["counts"]["campaigns"], 0);
  EXPECT_EQ(cli({"export", "--storage", dir.str(), "--out", dir.str(), "--campaign-id", "nope"}).code, 1);
}

TEST(CliErrors, ExitCodeMapping) {
  EXPECT_EQ(exit_code_for(ErrorCode::kOutOfRange), 1);
  EXPECT_EQ(exit_code_for(ErrorCode::kUnknownSession), 1);
  EXPECT_EQ(exit_code_for(ErrorCode::kStorageError), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kRetryableProviderError), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kProviderTimeout), 2);
  const Json doc = error_document(Error(ErrorCode::kEmptyList, "styles empty", {{ErrorCode::kEmptyList, "styles", "x"}}));
  EXPECT_EQ(doc["error_code"], "EmptyList");
  EXPECT_EQ(doc["violations"][0]["field"], "styles");
}

TEST(CliErrors, CorruptStorageIsRuntimeError) {
  TempDir dir;
  write(dir / "fragments.jsonl", "{broken}\n");
  const Result r = cli({"fragments", "import", "--in", kAssets + "/human_fragments.jsonl", "--storage", dir.str()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.doc["error_code"], "StorageError");
}

// Runs the real binary: signal handling only makes sense in its own process.
TEST(CliServe, ServesUntilSigterm) {
  TempDir dir;
  cli({"fragments", "import", "--in", kAssets + "/human_fragments.jsonl", "--storage", (dir / "data").string()});
  write(dir / "service.json", Json{{"listen_addr", "127.0.0.1:0"}, {"session_trials", 2}, {"storage_path", "data"}}.dump());

  int out_pipe[2];
  ASSERT_EQ(::pipe(out_pipe), 0);
  const pid_t child = ::fork();
  ASSERT_GE(child, 0);
  if (child == 0) {
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    const std::string config = (dir / "service.json").string();
    ::execl(PERCEPTIONLAB_CLI_PATH, "perceptionlab", "serve", "--config", config.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(out_pipe[1]);
  std::string line;
  char c = 0;
  while (::read(out_pipe[0], &c, 1) == 1 && c != '\n') line.push_back(c);
  ::close(out_pipe[0]);
  const Json banner = Json::parse(line, nullptr, false);
  ASSERT_FALSE(banner.is_discarded()) << line;
  const std::string listening = banner["listening"];
  const int port = std::stoi(listening.substr(listening.rfind(':') + 1));

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  auto reg = client.Post("/v1/participants", Json{{"age_band", "35-44"}, {"education", "bachelor"}, {"consent", true}}.dump(),
                         "application/json");
  ASSERT_TRUE(reg);
  EXPECT_EQ(reg->status, 201) << reg->body;

  ::kill(child, SIGTERM);
  int status = 0;
  ::waitpid(child, &status, 0);
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  const std::string participants = slurp(dir / "data" / "participants.jsonl");
  EXPECT_EQ(std::count(participants.begin(), participants.end(), '\n'), 1);
}

}  // namespace
}  // namespace perceptionlab::cli
