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

#include "perceptionlab/stimulus.hpp"

#include <array>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "perceptionlab/hash.hpp"

namespace perceptionlab::stimulus {
namespace {

std::string shortest(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

bool is_ident_char(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_'; }

// Spaces request starts so the provider sees at most `rpm` per minute.
class RateLimiter {
 public:
  RateLimiter(double rpm, std::function<void(std::chrono::milliseconds)> sleep)
      : interval_(rpm > 0 ? std::chrono::milliseconds(static_cast<long long>(60'000.0 / rpm)) : std::chrono::milliseconds(0)),
        sleep_(std::move(sleep)) {}

  void acquire() {
    if (interval_.count() == 0) return;
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard<std::mutex> lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      if (next_ < now) next_ = now;
      wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_ - now);
      next_ += interval_;
    }
    if (wait.count() > 0) sleep_(wait);
  }

 private:
  std::chrono::milliseconds interval_;
  std::function<void(std::chrono::milliseconds)> sleep_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

}  // namespace

std::string TaskCell::canonical() const {
  return "model=" + model.model_name + ";temperature=" + shortest(temperature) + ";style=" + style +
         ";format=" + format + ";language=" + language + ";veracity=" + std::string(to_string(veracity));
}

Uuid GenerationTask::fragment_id() const {
  return Uuid::from_name("fragment|" + campaign_id.to_string() + "|" + std::to_string(ordinal));
}

std::uint64_t derive_seed(std::uint64_t campaign_seed, const std::string& canonical_cell, int replicate_index) {
  return sha256_prefix_u64(std::to_string(campaign_seed) + "|" + canonical_cell + "|" + std::to_string(replicate_index));
}

std::vector<GenerationTask> expand_campaign(const GenerationCampaign& c) {
  std::vector<GenerationTask> tasks;
  tasks.reserve(static_cast<std::size_t>(c.task_count()));
  for (const auto& model : c.models) {
    for (double temperature : c.temperatures) {
      for (const auto& style : c.styles) {
        for (const auto& format : c.formats) {
          for (const auto& language : c.languages) {
            for (Veracity veracity : c.veracity_targets) {
              TaskCell cell{model, temperature, style, format, language, veracity};
              const std::string key = cell.canonical();
              for (int r = 0; r < c.replicates_per_cell; ++r) {
                GenerationTask t;
                t.campaign_id = c.campaign_id;
                t.cell = cell;
                t.replicate_index = r;
                if (!c.topics.empty()) t.topic = c.topics[static_cast<std::size_t>(r) % c.topics.size()];
                t.derived_seed = derive_seed(c.seed, key, r);
                t.ordinal = tasks.size();
                t.task_id = Uuid::from_name("task|" + c.campaign_id.to_string() + "|" + std::to_string(t.ordinal));
                tasks.push_back(std::move(t));
              }
            }
          }
        }
      }
    }
  }
  return tasks;
}

std::string render_template(std::string_view text, const Bindings& bindings) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      out.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      out.push_back('}');
      ++i;
    } else if (c == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      if (j < text.size() && text[j] == '}' && j > i + 1) {
        const std::string_view name = text.substr(i + 1, j - i - 1);
        auto it = bindings.find(name);
        if (it == bindings.end()) {
          throw Error(ErrorCode::kUnboundPlaceholder, "UnboundPlaceholder(\"" + std::string(name) + "\")",
                      {{ErrorCode::kUnboundPlaceholder, std::string(name), "placeholder has no binding"}});
        }
        out += it->second;
        i = j;
      } else {
        out.push_back(c);
      }
    } else {
      out.push_back(c);
    }
  }
  return out;
}

Bindings bindings_for(const GenerationTask& t) {
  Bindings b{{"style", t.cell.style},
             {"format", t.cell.format},
             {"language", t.cell.language},
             {"veracity", std::string(to_string(t.cell.veracity))}};
  if (t.topic) b.emplace("topic", *t.topic);
  return b;
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, const GenerationTask& task) {
  const Bindings b = bindings_for(task);
  return {render_template(tmpl.system_template, b), render_template(tmpl.user_template, b)};
}

void to_json(Json& j, const CampaignReport& r) {
  Json failed = Json::array();
  for (const auto& f : r.failed) failed.push_back({{"task_id", f.task_id.to_string()}, {"error", f.error}});
  j = Json{{"campaign_id", r.campaign_id.to_string()},
           {"tasks_total", r.tasks_total},
           {"generated", r.generated},
           {"skipped", r.skipped},
           {"failed", failed},
           {"retries_total", r.retries_total},
           {"wall_time_ms", r.wall_time_ms}};
}

std::chrono::milliseconds backoff_delay(std::chrono::milliseconds initial, int retry, std::uint64_t jitter_draw) {
  const int shift = std::clamp(retry - 1, 0, 20);
  const long long cap = initial.count() << shift;
  if (cap <= 0) return std::chrono::milliseconds(0);
  return std::chrono::milliseconds(static_cast<long long>(jitter_draw % static_cast<std::uint64_t>(cap + 1)));
}

NewsFragment make_fragment(const GenerationCampaign& campaign, const GenerationTask& task, const RenderedPrompt& prompt,
                           const provider::CompletionRequest& request, const provider::CompletionResult& result,
                           bool seed_sent, Timestamp created_at) {
  NewsFragment f;
  f.fragment_id = task.fragment_id();
  f.campaign_id = campaign.campaign_id;
  f.source = Source::kGenerated;
  f.model = task.cell.model.model_name;
  if (!result.model_version_reported.empty()) {
    f.model_version = result.model_version_reported;
  } else if (task.cell.model.model_version_pin) {
    f.model_version = task.cell.model.model_version_pin;
  }
  f.temperature = task.cell.temperature;
  f.style = task.cell.style;
  f.format = task.cell.format;
  f.language = task.cell.language;
  f.veracity_label = task.cell.veracity;
  f.prompt_system = prompt.system_text;
  f.prompt_user = prompt.user_text;
  Json params = {{"temperature", request.temperature},
                 {"max_tokens", request.max_tokens},
                 {"derived_seed", task.derived_seed},
                 {"finish_reason", to_string(result.finish_reason)},
                 {"prompt_tokens", result.prompt_tokens},
                 {"completion_tokens", result.completion_tokens},
                 {"provider", to_string(task.cell.model.provider)},
                 {"prompt_template_id", campaign.prompt_template_id},
                 {"task_id", task.task_id.to_string()},
                 {"task_ordinal", task.ordinal},
                 {"replicate_index", task.replicate_index},
                 {"request_id", request.request_id.to_string()}};
  if (seed_sent && request.seed) params["seed"] = *request.seed;
  if (task.topic) params["topic"] = *task.topic;
  f.generation_params = std::move(params);
  f.text = result.text;
  f.content_hash = content_hash(f.text);
  f.created_at = created_at;
  return f;
}

CampaignReport run_campaign(const GenerationCampaign& campaign, provider::CompletionProvider& provider,
                            storage::DocumentStore& store, const RunOptions& options) {
  using storage::Collection;
  const auto started = std::chrono::steady_clock::now();
  if (!campaign.prompt_template) {
    throw Error(ErrorCode::kMissingField, "campaign " + campaign.campaign_id.to_string() + " has no prompt_template");
  }
  const PromptTemplate& tmpl = *campaign.prompt_template;
  const SystemClock system_clock;
  const Clock& clock = options.clock ? *options.clock : static_cast<const Clock&>(system_clock);
  auto sleep = options.sleep ? options.sleep : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  const std::string campaign_id = campaign.campaign_id.to_string();
  if (auto existing = store.get(Collection::kCampaigns, campaign_id)) {
    if (*existing != Json(campaign)) {
      throw Error(ErrorCode::kDuplicateId, "campaign " + campaign_id + " is stored with a different definition");
    }
  } else {
    store.insert(Collection::kCampaigns, Json(campaign));
  }

  const std::vector<GenerationTask> tasks = expand_campaign(campaign);
  // Render everything up front: a template error fails the run before any request.
  std::vector<RenderedPrompt> prompts;
  prompts.reserve(tasks.size());
  for (const auto& t : tasks) prompts.push_back(render_prompt(tmpl, t));

  CampaignReport report;
  report.campaign_id = campaign.campaign_id;
  report.tasks_total = tasks.size();

  std::mutex report_mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr storage_failure;
  RateLimiter limiter(options.requests_per_minute, sleep);
  const bool seed_sent = provider.accepts_seed();
  std::vector<std::optional<TaskFailure>> failures(tasks.size());

  auto worker = [&]() {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const GenerationTask& task = tasks[i];
      const std::string fragment_id = task.fragment_id().to_string();
      if (store.contains(Collection::kFragments, fragment_id)) {
        std::lock_guard<std::mutex> lock(report_mu);
        ++report.skipped;
        continue;
      }

      provider::CompletionRequest request;
      request.model_name = task.cell.model.model_name;
      request.system_text = prompts[i].system_text;
      request.user_text = prompts[i].user_text;
      request.temperature = task.cell.temperature;
      request.max_tokens = options.max_tokens;
      request.seed = task.derived_seed;

      std::mt19937_64 jitter(task.derived_seed);
      std::optional<provider::CompletionResult> result;
      std::string last_error;
      int attempts = 0;
      for (int attempt = 1; attempt <= std::max(1, options.max_attempts); ++attempt) {
        attempts = attempt;
        request.request_id =
            Uuid::from_name("request|" + task.task_id.to_string() + "|" + std::to_string(attempt));
        if (attempt > 1) sleep(backoff_delay(options.initial_backoff, attempt - 1, jitter()));
        limiter.acquire();
        try {
          result = provider.complete(request);
          if (result->text.empty()) {
            last_error = "PermanentError(empty completion, finish_reason=" +
                         std::string(to_string(result->finish_reason)) + ")";
            result.reset();
            break;
          }
          break;
        } catch (const provider::ProviderError& e) {
          last_error = e.what();
          if (!e.retryable()) break;
        } catch (const Error& e) {
          last_error = std::string(to_string(e.code())) + ": " + e.what();
          break;
        }
      }

      {
        std::lock_guard<std::mutex> lock(report_mu);
        report.retries_total += static_cast<std::size_t>(attempts - 1);
      }
      if (!result) {
        failures[i] = TaskFailure{task.task_id, "ProviderError(" + task.task_id.to_string() + "): " + last_error};
        continue;
      }

      const NewsFragment fragment = make_fragment(campaign, task, prompts[i], request, *result, seed_sent, clock.now());
      try {
        store.insert(Collection::kFragments, Json(fragment));
        std::lock_guard<std::mutex> lock(report_mu);
        ++report.generated;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kDuplicateId) {
          std::lock_guard<std::mutex> lock(report_mu);
          ++report.skipped;
        } else {
          std::lock_guard<std::mutex> lock(report_mu);
          if (!storage_failure) storage_failure = std::current_exception();
          abort = true;
        }
      }
    }
  };

  const int workers = std::clamp(options.parallelism, 1, static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (storage_failure) std::rethrow_exception(storage_failure);

  for (auto& f : failures) {
    if (f) report.failed.push_back(std::move(*f));
  }
  report.wall_time_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void to_json(Json& j, const ImportReport& r) {
  Json rejected = Json::array();
  for (const auto& x : r.rejected) rejected.push_back({{"line", x.line}, {"reason", x.reason}});
  j = Json{{"imported", r.imported}, {"skipped_duplicate", r.skipped_duplicate}, {"rejected", rejected}};
}

ImportReport import_human_fragments(std::istream& lines, storage::DocumentStore& store, const Clock& clock) {
  using storage::Collection;
  ImportReport report;
  std::set<std::string> known_hashes;
  for (const auto& doc : store.query(Collection::kFragments)) known_hashes.insert(doc.at("content_hash").get<std::string>());

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto reject = [&](std::string reason) { report.rejected.push_back({line_no, std::move(reason)}); };

    Json doc = Json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      reject("line is not a JSON object");
      continue;
    }
    if (doc.value("source", std::string()) != "human") {
      reject("human import requires source=human");
      continue;
    }
    if (doc.contains("text") && doc["text"].is_string()) {
      const std::string hash = content_hash(doc["text"].get<std::string>());
      if (!doc.contains("fragment_id")) doc["fragment_id"] = Uuid::from_name("human|" + hash).to_string();
      if (known_hashes.count(hash)) {
        ++report.skipped_duplicate;
        continue;
      }
    }
    if (!doc.contains("created_at")) doc["created_at"] = format_rfc3339(clock.now());
    try {
      const NewsFragment f = validate_fragment(doc);
      store.insert(Collection::kFragments, Json(f));
      known_hashes.insert(f.content_hash);
      ++report.imported;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kStorageError) throw;
      reject(std::string(to_string(e.code())) + ": " + e.what());
    }
  }
  return report;
}

CampaignValidation load_campaign_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidValue, "cannot read campaign config " + path);
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kSchemaViolation, path + " is not valid JSON");
  if (doc.is_object() && doc.contains("prompt_template_path")) {
    const auto rel = doc["prompt_template_path"].get<std::string>();
    const auto tpath = std::filesystem::path(path).parent_path() / rel;
    std::ifstream tin(tpath);
    if (!tin) throw Error(ErrorCode::kInvalidValue, "cannot read prompt template " + tpath.string());
    Json tdoc = Json::parse(tin, nullptr, false);
    if (tdoc.is_discarded()) throw Error(ErrorCode::kSchemaViolation, tpath.string() + " is not valid JSON");
    doc["prompt_template"] = tdoc;
    doc.erase("prompt_template_path");
  }
  return validate_campaign(doc);
}

}  // namespace perceptionlab::stimulus
