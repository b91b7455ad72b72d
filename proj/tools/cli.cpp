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

#include "cli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <pthread.h>

#include "perceptionlab/analytics.hpp"
#include "perceptionlab/http_server.hpp"
#include "perceptionlab/provider.hpp"
#include "perceptionlab/simulation.hpp"
#include "perceptionlab/stimulus.hpp"
#include "perceptionlab/storage.hpp"
#include "perceptionlab/study_service.hpp"

namespace perceptionlab::cli {
namespace fs = std::filesystem;
using storage::Collection;

namespace {

struct Flags {
  std::string config;
  std::string storage = "data";
  std::string campaign_id;
  std::string provider = "mock";
  std::string out;
  std::string in;
  std::optional<std::uint64_t> seed;
  std::string csv;
  std::string request_log;
  int parallelism = 4;
  double requests_per_minute = 60.0;
};

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidValue, "cannot read " + path);
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kSchemaViolation, path + " is not valid JSON");
  return doc;
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kStorageError, "cannot write " + path.string());
}

template <typename T>
void write_jsonl(const fs::path& path, const std::vector<T>& items) {
  std::string text;
  for (const auto& item : items) {
    text += Json(item).dump();
    text += '\n';
  }
  write_text_file(path, text);
}

std::optional<Uuid> parse_campaign_flag(const std::string& text) {
  if (text.empty()) return std::nullopt;
  auto id = Uuid::parse(text);
  if (!id) {
    throw Error(ErrorCode::kInvalidValue, "--campaign-id must be a UUID",
                {{ErrorCode::kInvalidValue, "campaign_id", "not a UUID"}});
  }
  return id;
}

std::shared_ptr<provider::CompletionProvider> build_provider(const GenerationCampaign& campaign, const Flags& flags,
                                                             std::ostream& err,
                                                             std::shared_ptr<provider::MockProvider>& mock) {
  mock = std::make_shared<provider::MockProvider>();
  if (flags.provider == "mock") return mock;

  auto router = std::make_shared<provider::ProviderRouter>();
  const auto credentials = provider::Credentials::from_environment();
  const char* env_base = std::getenv(provider::kApiBaseEnv);
  auto log = [&err](std::string_view line) { err << line << '\n'; };
  for (const ModelSpec& m : campaign.models) {
    if (m.provider == ProviderKind::kMock) {
      router->add(m.model_name, mock);
      continue;
    }
    std::string base = m.api_base.empty() && env_base ? env_base : m.api_base;
    if (base.empty()) {
      throw Error(ErrorCode::kMissingField,
                  "model " + m.model_name + " has no api_base and " + provider::kApiBaseEnv + " is unset");
    }
    if (credentials.api_key.empty()) {
      throw Error(ErrorCode::kMissingField, std::string(provider::kApiKeyEnv) + " is not set");
    }
    router->add(m.model_name, std::make_shared<provider::OpenAICompatibleClient>(
                                  provider::Endpoint::from_api_base(base), credentials, log));
  }
  return router;
}

int campaign_validate(const Flags& flags, std::ostream& out) {
  const CampaignValidation v = stimulus::load_campaign_config(flags.config);
  out << Json{{"campaign_id", v.campaign.campaign_id.to_string()},
              {"cell_count", v.cell_count},
              {"task_count", v.task_count}}
             .dump()
      << '\n';
  return kOk;
}

int campaign_run(const Flags& flags, std::ostream& out, std::ostream& err) {
  if (flags.provider != "mock" && flags.provider != "live") {
    throw Error(ErrorCode::kInvalidValue, "--provider must be mock or live");
  }
  const CampaignValidation v = stimulus::load_campaign_config(flags.config);
  storage::JsonlStore store(flags.storage);
  std::shared_ptr<provider::MockProvider> mock;
  auto provider = build_provider(v.campaign, flags, err, mock);

  stimulus::RunOptions options;
  options.parallelism = flags.parallelism;
  options.requests_per_minute = flags.provider == "mock" ? 0.0 : flags.requests_per_minute;
  const auto report = stimulus::run_campaign(v.campaign, *provider, store, options);

  if (!flags.request_log.empty()) {
    std::string text;
    for (const auto& line : mock->request_log()) text += line + '\n';
    write_text_file(flags.request_log, text);
  }
  out << Json(report).dump() << '\n';
  err << "campaign " << report.campaign_id.to_string() << ": generated " << report.generated << ", skipped "
      << report.skipped << ", failed " << report.failed.size() << '\n';
  return report.failed.empty() ? kOk : kRuntimeError;
}

int fragments_import(const Flags& flags, std::ostream& out) {
  std::ifstream in(flags.in);
  if (!in) throw Error(ErrorCode::kInvalidValue, "cannot read " + flags.in);
  storage::JsonlStore store(flags.storage);
  SystemClock clock;
  const auto report = stimulus::import_human_fragments(in, store, clock);
  out << Json(report).dump() << '\n';
  return report.rejected.empty() ? kOk : kValidationError;
}

int export_store(const Flags& flags, std::ostream& out) {
  if (flags.out.empty()) throw Error(ErrorCode::kMissingField, "--out is required");
  const auto campaign = parse_campaign_flag(flags.campaign_id);
  storage::JsonlStore store(flags.storage);

  std::set<std::string> sessions_in_scope;
  Json counts = Json::object();
  for (Collection c : storage::kAllCollections) {
    std::vector<Json> docs = store.query(c);
    if (campaign) {
      const std::string id = campaign->to_string();
      std::vector<Json> kept;
      for (Json& d : docs) {
        bool keep = true;
        switch (c) {
          case Collection::kCampaigns:
            keep = d.value("campaign_id", "") == id;
            break;
          case Collection::kFragments:
            keep = d.value("source", "") == "human" || d.value("campaign_id", "") == id;
            break;
          case Collection::kSessions:
            keep = d.value("campaign_id", "") == id;
            if (keep) sessions_in_scope.insert(d.value("session_id", ""));
            break;
          case Collection::kJudgments:
          case Collection::kPresentations:
            keep = sessions_in_scope.count(d.value("session_id", "")) > 0;
            break;
          case Collection::kParticipants:
            break;
        }
        if (keep) kept.push_back(std::move(d));
      }
      docs = std::move(kept);
    }
    counts[std::string(to_string(c))] = docs.size();
    write_jsonl(fs::path(flags.out) / (std::string(to_string(c)) + ".jsonl"), docs);
  }
  out << Json{{"out", flags.out}, {"counts", counts}}.dump() << '\n';
  return kOk;
}

int simulate(const Flags& flags, std::ostream& out) {
  if (flags.out.empty()) throw Error(ErrorCode::kMissingField, "--out is required");
  analytics::CohortSpec spec;
  if (!flags.config.empty()) spec = analytics::CohortSpec::from_json(read_json_file(flags.config));
  if (flags.seed) spec.seed = *flags.seed;
  const auto cohort = analytics::simulate_cohort(spec);
  const fs::path dir(flags.out);
  write_jsonl(dir / "fragments.jsonl", cohort.fragments);
  write_jsonl(dir / "participants.jsonl", cohort.participants);
  write_jsonl(dir / "sessions.jsonl", cohort.sessions);
  write_jsonl(dir / "judgments.jsonl", cohort.judgments);
  out << Json{{"out", flags.out},
              {"spec", spec},
              {"n_fragments", cohort.fragments.size()},
              {"n_participants", cohort.participants.size()},
              {"n_judgments", cohort.judgments.size()}}
             .dump()
      << '\n';
  return kOk;
}

int report(const Flags& flags, std::ostream& out) {
  if (flags.in.empty()) throw Error(ErrorCode::kMissingField, "--in is required");
  const auto data = analytics::Dataset::load_export(flags.in);
  const auto metrics = analytics::compute_report(data);
  const std::string text = Json(metrics).dump(2) + "\n";
  if (!flags.out.empty()) write_text_file(flags.out, text);
  if (!flags.csv.empty()) {
    std::ostringstream csv;
    analytics::write_cell_csv(csv, metrics);
    write_text_file(flags.csv, csv.str());
  }
  out << text;
  return kOk;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidValue, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int serve(const Flags& flags, bool storage_given, std::ostream& out, std::ostream& err) {
  study::ServiceConfig config;
  fs::path base;
  if (!flags.config.empty()) {
    config = study::ServiceConfig::load(flags.config);
    base = fs::path(flags.config).parent_path();
  }
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  if (storage_given) config.storage_path = flags.storage;
  if (auto c = parse_campaign_flag(flags.campaign_id)) config.campaign_id = c;

  study::StudyOptions options;
  options.session_trials = config.session_trials;
  options.default_campaign_id = config.campaign_id;
  if (config.prebunk_text_path) options.prebunk_text = read_text_file(resolve(*config.prebunk_text_path));

  storage::JsonlStore store(storage_given ? fs::path(config.storage_path) : resolve(config.storage_path));
  SystemClock clock;
  study::StudyService service(store, options, clock);
  std::optional<std::string> static_dir;
  if (config.static_dir) static_dir = resolve(*config.static_dir).string();
  study::HttpServer server(service, static_dir);
  const auto [host, port] = study::parse_listen_addr(config.listen_addr);

  // Block termination signals here so a dedicated thread can wait for them
  // and stop the server outside signal context.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const int bound = server.bind(host, port);
  out << Json{{"listening", host + ":" + std::to_string(bound)}, {"storage", store.root().string()}}.dump() << '\n';
  out.flush();
  err << "serving on " << host << ':' << bound << '\n';

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  err << "stopped\n";
  return kOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kStorageError:
    case ErrorCode::kRetryableProviderError:
    case ErrorCode::kPermanentProviderError:
    case ErrorCode::kProviderTimeout:
      return kRuntimeError;
    default:
      return kValidationError;
  }
}

Json error_document(const Error& error) {
  Json violations = Json::array();
  for (const auto& v : error.violations()) {
    violations.push_back({{"code", to_string(v.code)}, {"field", v.field}, {"message", v.message}});
  }
  return Json{{"error_code", to_string(error.code())}, {"message", error.what()}, {"violations", violations}};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PerceptionLab: stimulus generation, study service and analytics", "perceptionlab"};
  app.require_subcommand(1);
  Flags flags;

  auto add_storage = [&](CLI::App* cmd) { return cmd->add_option("--storage", flags.storage, "Storage directory"); };

  auto* campaign = app.add_subcommand("campaign", "Validate or run a generation campaign");
  campaign->require_subcommand(1);
  auto* validate = campaign->add_subcommand("validate", "Validate a campaign config");
  validate->add_option("--config", flags.config, "Campaign config JSON")->required();
  auto* run_cmd = campaign->add_subcommand("run", "Generate every missing fragment of a campaign");
  run_cmd->add_option("--config", flags.config, "Campaign config JSON")->required();
  add_storage(run_cmd);
  run_cmd->add_option("--provider", flags.provider, "mock or live")->check(CLI::IsMember({"mock", "live"}));
  run_cmd->add_option("--parallelism", flags.parallelism, "Concurrent provider calls")->check(CLI::PositiveNumber);
  run_cmd->add_option("--requests-per-minute", flags.requests_per_minute, "Live provider rate ceiling");
  run_cmd->add_option("--request-log", flags.request_log, "Write mock requests, one per line");

  auto* fragments = app.add_subcommand("fragments", "Manage fragments");
  fragments->require_subcommand(1);
  auto* import = fragments->add_subcommand("import", "Import human-written fragments from JSONL");
  import->add_option("--in", flags.in, "JSONL file")->required();
  add_storage(import);

  auto* serve_cmd = app.add_subcommand("serve", "Run the study service");
  serve_cmd->add_option("--config", flags.config, "Service config JSON");
  auto* serve_storage = add_storage(serve_cmd);
  serve_cmd->add_option("--campaign-id", flags.campaign_id, "Campaign whose fragments are served");

  auto* export_cmd = app.add_subcommand("export", "Export collections as JSONL");
  add_storage(export_cmd);
  export_cmd->add_option("--out", flags.out, "Output directory")->required();
  export_cmd->add_option("--campaign-id", flags.campaign_id, "Restrict to one campaign");

  auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic cohort export");
  simulate_cmd->add_option("--config,--spec", flags.config, "Cohort spec JSON");
  simulate_cmd->add_option("--out", flags.out, "Output directory")->required();
  simulate_cmd->add_option("--seed", flags.seed, "Override the spec seed");

  auto* report_cmd = app.add_subcommand("report", "Compute the metrics report for an export");
  report_cmd->add_option("--in", flags.in, "Export directory")->required();
  report_cmd->add_option("--out", flags.out, "Also write the report here");
  report_cmd->add_option("--csv", flags.csv, "Write accuracy_by_cell as CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    err << app.help();
    out << Json{{"help", true}}.dump() << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    out << Json{{"error_code", "UsageError"}, {"message", e.what()}}.dump() << '\n';
    return kValidationError;
  }

  try {
    if (*validate) return campaign_validate(flags, out);
    if (*run_cmd) return campaign_run(flags, out, err);
    if (*import) return fragments_import(flags, out);
    if (*serve_cmd) return serve(flags, serve_storage->count() > 0, out, err);
    if (*export_cmd) return export_store(flags, out);
    if (*simulate_cmd) return simulate(flags, out);
    if (*report_cmd) return report(flags, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    out << error_document(e).dump() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    out << Json{{"error_code", "RuntimeError"}, {"message", e.what()}}.dump() << '\n';
    return kRuntimeError;
  }
  return kValidationError;
}

}  // namespace perceptionlab::cli
