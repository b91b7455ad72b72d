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

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "perceptionlab/domain.hpp"
#include "perceptionlab/provider.hpp"
#include "perceptionlab/storage.hpp"

namespace perceptionlab::stimulus {

/// One combination of generative variables.
struct TaskCell {
  ModelSpec model;
  double temperature = 0.0;
  std::string style;
  std::string format;
  std::string language;
  Veracity veracity = Veracity::kReal;

  /// `model=..;temperature=..;style=..;format=..;language=..;veracity=..`,
  /// with the temperature in shortest round-trip form. Seeds hash this string.
  std::string canonical() const;
};

struct GenerationTask {
  Uuid task_id;
  Uuid campaign_id;
  TaskCell cell;
  int replicate_index = 0;
  std::optional<std::string> topic;
  std::uint64_t derived_seed = 0;
  std::size_t ordinal = 0;  // position in the campaign's task order

  /// Id of the fragment this task produces; fixed per (campaign, ordinal), which
  /// is what makes re-runs skip finished work.
  Uuid fragment_id() const;
};

std::uint64_t derive_seed(std::uint64_t campaign_seed, const std::string& canonical_cell, int replicate_index);

/// Tasks in nested declaration order: models, temperatures, styles, formats,
/// languages, veracity targets, then replicates (innermost). Topics rotate
/// round-robin over replicates within a cell.
std::vector<GenerationTask> expand_campaign(const GenerationCampaign& campaign);

struct RenderedPrompt {
  std::string system_text;
  std::string user_text;

  bool operator==(const RenderedPrompt&) const = default;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Substitutes `{name}` placeholders; `{{`/`}}` emit literal braces.
/// Throws kUnboundPlaceholder naming the first unbound placeholder.
std::string render_template(std::string_view text, const Bindings& bindings);

Bindings bindings_for(const GenerationTask& task);
RenderedPrompt render_prompt(const PromptTemplate& prompt_template, const GenerationTask& task);

struct RunOptions {
  int parallelism = 4;
  double requests_per_minute = 60.0;  // <= 0 disables the ceiling
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  int max_tokens = 400;
  // Injected so tests can observe backoff without waiting.
  std::function<void(std::chrono::milliseconds)> sleep;
  const Clock* clock = nullptr;
};

struct TaskFailure {
  Uuid task_id;
  std::string error;
};

struct CampaignReport {
  Uuid campaign_id;
  std::size_t tasks_total = 0;
  std::size_t generated = 0;
  std::size_t skipped = 0;
  std::vector<TaskFailure> failed;
  std::size_t retries_total = 0;
  std::int64_t wall_time_ms = 0;
};

void to_json(Json& j, const CampaignReport& report);

/// Full-jitter exponential backoff: uniform in [0, initial * 2^(retry-1)].
std::chrono::milliseconds backoff_delay(std::chrono::milliseconds initial, int retry, std::uint64_t jitter_draw);

/// Generates and persists one fragment per task not yet in storage. Provider
/// errors are recorded per task; storage errors abort the run.
CampaignReport run_campaign(const GenerationCampaign& campaign, provider::CompletionProvider& provider,
                            storage::DocumentStore& store, const RunOptions& options = {});

/// Builds the fragment document exactly as run_campaign persists it.
NewsFragment make_fragment(const GenerationCampaign& campaign, const GenerationTask& task,
                           const RenderedPrompt& prompt, const provider::CompletionRequest& request,
                           const provider::CompletionResult& result, bool seed_sent, Timestamp created_at);

struct ImportRejection {
  std::size_t line = 0;
  std::string reason;
};

struct ImportReport {
  std::size_t imported = 0;
  std::size_t skipped_duplicate = 0;
  std::vector<ImportRejection> rejected;
};

void to_json(Json& j, const ImportReport& report);

/// Imports human-written control fragments from line-delimited JSON. Lines
/// without fragment_id get one derived from the content hash; lines without
/// created_at are stamped with the current time.
ImportReport import_human_fragments(std::istream& lines, storage::DocumentStore& store, const Clock& clock);

/// Loads a campaign config: a GenerationCampaign document whose template is
/// given inline as `prompt_template` or by `prompt_template_path` (relative to
/// the config file).
CampaignValidation load_campaign_config(const std::string& path);

}  // namespace perceptionlab::stimulus
