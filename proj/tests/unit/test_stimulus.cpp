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

#include <fstream>
#include <set>
#include <sstream>

#include "oracles/sha256_reference.hpp"
#include "perceptionlab/stimulus.hpp"
#include "support/test_support.hpp"

namespace perceptionlab::stimulus {
namespace {

using perceptionlab::testing::campaign_doc;
using perceptionlab::testing::human_fragment_doc;
using perceptionlab::testing::TempDir;
using storage::Collection;
using storage::JsonlStore;

GenerationCampaign campaign(const Json& doc = campaign_doc()) { return validate_campaign(doc).campaign; }

RunOptions quick_options(std::vector<std::chrono::milliseconds>* sleeps = nullptr) {
  RunOptions o;
  o.parallelism = 1;
  o.requests_per_minute = 0;
  o.sleep = [sleeps](std::chrono::milliseconds d) {
    if (sleeps) sleeps->push_back(d);
  };
  return o;
}

// Wraps a store and fails fragment inserts once `after` have gone through.
class FailingStore final : public storage::DocumentStore {
 public:
  FailingStore(storage::DocumentStore& inner, std::size_t after) : inner_(inner), after_(after) {}

  std::string insert(Collection c, const Json& d) override {
    if (c == Collection::kFragments && inserted_++ >= after_) throw Error(ErrorCode::kStorageError, "disk full");
    return inner_.insert(c, d);
  }
  std::vector<std::string> insert_many(Collection c, const std::vector<Json>& d) override {
    return inner_.insert_many(c, d);
  }
  std::optional<Json> get(Collection c, std::string_view id) const override { return inner_.get(c, id); }
  bool contains(Collection c, std::string_view id) const override { return inner_.contains(c, id); }
  std::vector<Json> query(Collection c, const storage::Filter& f) const override { return inner_.query(c, f); }
  std::size_t size(Collection c) const override { return inner_.size(c); }

 private:
  storage::DocumentStore& inner_;
  std::size_t after_;
  std::size_t inserted_ = 0;
};

TEST(ExpandCampaign, CountOrderAndStableSeeds) {
  const GenerationCampaign c = campaign();
  const auto tasks = expand_campaign(c);
  ASSERT_EQ(tasks.size(), 24u);
  for (std::size_t i = 0; i < tasks.size(); ++i) EXPECT_EQ(tasks[i].ordinal, i);
  // Replicates innermost, then styles, temperatures, models.
  EXPECT_EQ(tasks[0].cell.model.model_name, "mock-writer-a");
  EXPECT_EQ(tasks[0].cell.temperature, 0.2);
  EXPECT_EQ(tasks[0].cell.style, "tabloid");
  EXPECT_EQ(tasks[2].replicate_index, 2);
  EXPECT_EQ(tasks[3].cell.style, "broadsheet");
  EXPECT_EQ(tasks[6].cell.temperature, 1.0);
  EXPECT_EQ(tasks[12].cell.model.model_name, "mock-writer-b");
  EXPECT_EQ(tasks[23].cell.canonical(),
            "model=mock-writer-b;temperature=1;style=broadsheet;format=headline;language=en;veracity=fake");

  const auto again = expand_campaign(c);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    EXPECT_EQ(again[i].derived_seed, tasks[i].derived_seed);
    EXPECT_EQ(again[i].task_id, tasks[i].task_id);
    ids.insert(tasks[i].fragment_id().to_string());
  }
  EXPECT_EQ(ids.size(), 24u);
}

TEST(ExpandCampaign, TopicsRotateOverReplicates) {
  const auto tasks = expand_campaign(campaign());
  EXPECT_EQ(tasks[0].topic, "local elections");
  EXPECT_EQ(tasks[1].topic, "vaccine trial");
  EXPECT_EQ(tasks[2].topic, "river flooding");
  EXPECT_EQ(tasks[3].topic, "local elections");
}

TEST(ExpandCampaign, SingleCellSingleReplicate) {
  Json doc = campaign_doc();
  doc["models"] = Json::array({doc["models"][0]});
  doc["temperatures"] = {0.5};
  doc["styles"] = {"tabloid"};
  doc["replicates_per_cell"] = 1;
  const auto tasks = expand_campaign(campaign(doc));
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(tasks[0].replicate_index, 0);
}

TEST(DeriveSeed, ReferenceMix) {
  const std::string cell = "model=m;temperature=0.7;style=s;format=f;language=en;veracity=fake";
  const std::string digest = oracle::sha256_hex("20240611|" + cell + "|2");
  const std::uint64_t expected = std::stoull(digest.substr(0, 16), nullptr, 16);
  EXPECT_EQ(derive_seed(20240611, cell, 2), expected);
  EXPECT_NE(derive_seed(20240611, cell, 1), expected);
  EXPECT_NE(derive_seed(20240612, cell, 2), expected);
}

TEST(RenderTemplate, Substitution) {
  const Bindings b{{"style", "tabloid"}, {"format", "headline"}, {"language", "en"}};
  EXPECT_EQ(render_template("Write a {style} {format} in {language}", b), "Write a tabloid headline in en");
  EXPECT_EQ(render_template("{{style}} is literal, {style} is not", b), "{style} is literal, tabloid is not");
  EXPECT_EQ(render_template("no placeholders", b), "no placeholders");
}

TEST(RenderTemplate, UnboundPlaceholderNamesIt) {
  try {
    render_template("About {topic}.", Bindings{{"style", "x"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnboundPlaceholder);
    EXPECT_NE(std::string(e.what()).find("topic"), std::string::npos);
  }
}

TEST(RenderPrompt, TopicAbsentIsUnbound) {
  Json doc = campaign_doc();
  doc.erase("topics");
  const GenerationCampaign c = campaign(doc);
  const auto tasks = expand_campaign(c);
  try {
    render_prompt(*c.prompt_template, tasks[0]);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnboundPlaceholder);
    EXPECT_NE(std::string(e.what()).find("\"topic\""), std::string::npos) << e.what();
  }
}

TEST(RenderPrompt, PureAndPlaceholderFree) {
  const GenerationCampaign c = campaign();
  const auto tasks = expand_campaign(c);
  const RenderedPrompt a = render_prompt(*c.prompt_template, tasks[4]);
  EXPECT_EQ(render_prompt(*c.prompt_template, tasks[4]), a);
  EXPECT_EQ(a.system_text, "You are a newsroom writer. Write in a broadsheet register for the en edition.");
  EXPECT_EQ(a.user_text, "Write one headline about vaccine trial. The content must be fake.");
  EXPECT_EQ(a.user_text.find('{'), std::string::npos);
}

TEST(BackoffDelay, FullJitterBounds) {
  using std::chrono::milliseconds;
  EXPECT_EQ(backoff_delay(milliseconds(1000), 1, 0), milliseconds(0));
  EXPECT_EQ(backoff_delay(milliseconds(1000), 1, 1000), milliseconds(1000));
  EXPECT_EQ(backoff_delay(milliseconds(1000), 2, 2000), milliseconds(2000));
  for (std::uint64_t draw = 0; draw < 5000; draw += 37) {
    EXPECT_LE(backoff_delay(milliseconds(1000), 1, draw), milliseconds(1000));
    EXPECT_LE(backoff_delay(milliseconds(1000), 2, draw), milliseconds(2000));
  }
}

TEST(RunCampaign, MockGeneratesTwentyFourWithProvenance) {
  TempDir dir;
  JsonlStore store(dir.path(), {false});
  provider::MockProvider mock;
  const GenerationCampaign c = campaign();
  const CampaignReport report = run_campaign(c, mock, store, quick_options());
  EXPECT_EQ(report.tasks_total, 24u);
  EXPECT_EQ(report.generated, 24u);
  EXPECT_EQ(report.skipped, 0u);
  EXPECT_TRUE(report.failed.empty());
  EXPECT_EQ(report.retries_total, 0u);
  EXPECT_EQ(mock.calls(), 24u);

  const auto fragments = store.query(Collection::kFragments);
  ASSERT_EQ(fragments.size(), 24u);
  for (const Json& f : fragments) {
    EXPECT_EQ(f["source"], "generated");
    EXPECT_EQ(f["content_hash"], oracle::sha256_hex(f["text"].get<std::string>()));
    const Json& p = f["generation_params"];
    for (const char* key : {"temperature", "max_tokens", "derived_seed", "seed", "finish_reason", "prompt_tokens",
                            "completion_tokens", "task_ordinal", "request_id"}) {
      EXPECT_TRUE(p.contains(key)) << key;
    }
    EXPECT_EQ(f["model_version"], f["model"].get<std::string>() + "-mock");
  }
  EXPECT_TRUE(store.contains(Collection::kCampaigns, c.campaign_id.to_string()));
}

TEST(RunCampaign, RetriesCountedAndBackoffFollowsSchedule) {
  TempDir dir;
  JsonlStore store(dir.path(), {false});
  provider::MockProvider mock;
  const GenerationCampaign c = campaign();
  const std::uint64_t seed7 = expand_campaign(c)[7].derived_seed;
  mock.script_failures([seed7](const provider::CompletionRequest& r) { return r.seed == seed7; }, 2, 429);
  std::vector<std::chrono::milliseconds> sleeps;
  const CampaignReport report = run_campaign(c, mock, store, quick_options(&sleeps));
  EXPECT_EQ(report.generated, 24u);
  EXPECT_TRUE(report.failed.empty());
  EXPECT_EQ(report.retries_total, 2u);
  EXPECT_EQ(mock.calls(), 26u);
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_LE(sleeps[0], std::chrono::milliseconds(1000));
  EXPECT_LE(sleeps[1], std::chrono::milliseconds(2000));
}

TEST(RunCampaign, ExhaustedAndPermanentFailuresAreIsolated) {
  TempDir dir;
  JsonlStore store(dir.path(), {false});
  provider::MockProvider mock;
  const GenerationCampaign c = campaign();
  const auto tasks = expand_campaign(c);
  const std::uint64_t s3 = tasks[3].derived_seed;
  const std::uint64_t s9 = tasks[9].derived_seed;
  mock.script_failures([s3](const provider::CompletionRequest& r) { return r.seed == s3; }, 5, 503);
  mock.script_failures([s9](const provider::CompletionRequest& r) { return r.seed == s9; }, 1, 400);
  const CampaignReport report = run_campaign(c, mock, store, quick_options());
  EXPECT_EQ(report.generated, 22u);
  ASSERT_EQ(report.failed.size(), 2u);
  EXPECT_EQ(report.failed[0].task_id, tasks[3].task_id);
  EXPECT_EQ(report.failed[1].task_id, tasks[9].task_id);
  EXPECT_NE(report.failed[0].error.find("RetryableError(503)"), std::string::npos) << report.failed[0].error;
  EXPECT_NE(report.failed[1].error.find("PermanentError(400)"), std::string::npos) << report.failed[1].error;
  EXPECT_EQ(report.retries_total, 2u);

  // A re-run picks up exactly the two missing tasks.
  const CampaignReport rerun = run_campaign(c, mock, store, quick_options());
  EXPECT_EQ(rerun.generated, 2u);
  EXPECT_EQ(rerun.skipped, 22u);
}

TEST(RunCampaign, ImmediateRerunSkipsEverythingWithSameHashes) {
  TempDir dir;
  JsonlStore store(dir.path(), {false});
  const GenerationCampaign c = campaign();
  provider::MockProvider first;
  run_campaign(c, first, store, quick_options());
  provider::MockProvider second;
  const CampaignReport rerun = run_campaign(c, second, store, quick_options());
  EXPECT_EQ(rerun.generated, 0u);
  EXPECT_EQ(rerun.skipped, 24u);
  EXPECT_EQ(second.calls(), 0u);

  TempDir other;
  JsonlStore fresh(other.path(), {false});
  provider::MockProvider third;
  RunOptions parallel = quick_options();
  parallel.parallelism = 4;
  run_campaign(c, third, fresh, parallel);
  auto hashes = [](const storage::DocumentStore& s) {
    std::map<std::string, std::string> out;
    for (const Json& f : s.query(Collection::kFragments)) out[f["fragment_id"]] = f["content_hash"];
    return out;
  };
  EXPECT_EQ(hashes(fresh), hashes(store));
  auto log1 = first.request_log();
  auto log3 = third.request_log();
  std::sort(log1.begin(), log1.end());
  std::sort(log3.begin(), log3.end());
  EXPECT_EQ(log1, log3);
}

TEST(RunCampaign, ChangedDefinitionUnderSameIdRejected) {
  TempDir dir;
  JsonlStore store(dir.path(), {false});
  provider::MockProvider mock;
  run_campaign(campaign(), mock, store, quick_options());
  Json doc = campaign_doc();
  doc["seed"] = 1;
  try {
    run_campaign(campaign(doc), mock, store, quick_options());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateId);
  }
}

TEST(RunCampaign, StorageErrorAborts) {
  TempDir dir;
  JsonlStore inner(dir.path(), {false});
  FailingStore store(inner, 5);
  provider::MockProvider mock;
  try {
    run_campaign(campaign(), mock, store, quick_options());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStorageError);
  }
  EXPECT_EQ(inner.size(Collection::kFragments), 5u);
  EXPECT_LT(mock.calls(), 24u);
}

TEST(RunCampaign, ProvenanceReRenderFromStoredCampaign) {
  TempDir dir;
  JsonlStore store(dir.path(), {false});
  provider::MockProvider mock;
  run_campaign(campaign(), mock, store, quick_options());

  const auto stored = validate_campaign(*store.get(Collection::kCampaigns, perceptionlab::testing::kCampaignId));
  const auto tasks = expand_campaign(stored.campaign);
  for (const Json& f : store.query(Collection::kFragments)) {
    const auto& task = tasks.at(f["generation_params"]["task_ordinal"].get<std::size_t>());
    EXPECT_EQ(task.fragment_id().to_string(), f["fragment_id"]);
    const RenderedPrompt p = render_prompt(*stored.campaign.prompt_template, task);
    EXPECT_EQ(p.system_text, f["prompt_system"]);
    EXPECT_EQ(p.user_text, f["prompt_user"]);
  }
}

TEST(ImportHumanFragments, ImportDuplicateAndReject) {
  TempDir dir;
  JsonlStore store(dir.path(), {false});
  ManualClock clock(*parse_rfc3339("2026-02-01T00:00:00Z"));
  std::string ten;
  for (int i = 0; i < 10; ++i) {
    Json d = human_fragment_doc("Control headline number " + std::to_string(i), i % 2 ? "fake" : "real");
    d.erase("fragment_id");
    d.erase("created_at");
    ten += d.dump() + "\n";
  }
  std::istringstream first(ten);
  ImportReport r = import_human_fragments(first, store, clock);
  EXPECT_EQ(r.imported, 10u);
  EXPECT_TRUE(r.rejected.empty());
  for (const Json& f : store.query(Collection::kFragments)) EXPECT_EQ(f["created_at"], "2026-02-01T00:00:00.000Z");

  std::istringstream second(ten);
  r = import_human_fragments(second, store, clock);
  EXPECT_EQ(r.imported, 0u);
  EXPECT_EQ(r.skipped_duplicate, 10u);

  Json generated = perceptionlab::testing::generated_fragment_doc("Machine text");
  std::istringstream mixed("\n" + generated.dump() + "\nnot json\n" +
                           human_fragment_doc("One more control").dump() + "\n");
  r = import_human_fragments(mixed, store, clock);
  EXPECT_EQ(r.imported, 1u);
  ASSERT_EQ(r.rejected.size(), 2u);
  EXPECT_EQ(r.rejected[0].line, 2u);
  EXPECT_EQ(r.rejected[0].reason, "human import requires source=human");
  EXPECT_EQ(r.rejected[1].line, 3u);
  EXPECT_EQ(store.size(Collection::kFragments), 11u);
}

TEST(ImportHumanFragments, InvalidLineRejectedWithCode) {
  TempDir dir;
  JsonlStore store(dir.path(), {false});
  ManualClock clock(*parse_rfc3339("2026-02-01T00:00:00Z"));
  Json bad = human_fragment_doc("Bad label");
  bad["veracity_label"] = "satire";
  std::istringstream in(bad.dump() + "\n");
  const ImportReport r = import_human_fragments(in, store, clock);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].line, 1u);
  EXPECT_NE(r.rejected[0].reason.find("veracity_label"), std::string::npos) << r.rejected[0].reason;
}

TEST(LoadCampaignConfig, ResolvesTemplatePathRelativeToConfig) {
  TempDir dir;
  Json doc = campaign_doc();
  doc.erase("prompt_template");
  doc["prompt_template_path"] = "templates/news.json";
  std::filesystem::create_directories(dir / "templates");
  std::ofstream(dir / "templates/news.json") << perceptionlab::testing::prompt_template_doc().dump();
  std::ofstream(dir / "campaign.json") << doc.dump();
  const CampaignValidation v = load_campaign_config((dir / "campaign.json").string());
  EXPECT_EQ(v.cell_count, 8u);
  EXPECT_EQ(v.task_count, 24u);
  ASSERT_TRUE(v.campaign.prompt_template);
  EXPECT_EQ(v.campaign.prompt_template->template_id, "news-v1");
}

}  // namespace
}  // namespace perceptionlab::stimulus
