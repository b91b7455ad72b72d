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

// Canonical value types shared by every module. Each type has a JSON encoding
// with snake_case field names; the encoding produced by `to_json` is canonical
// (keys sorted, optional fields omitted when absent) and is both the wire and
// the storage format.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "perceptionlab/error.hpp"
#include "perceptionlab/time.hpp"
#include "perceptionlab/uuid.hpp"

namespace perceptionlab {

using Json = nlohmann::json;

inline constexpr double kMinTemperature = 0.0;
inline constexpr double kMaxTemperature = 2.0;
inline constexpr std::size_t kMaxFragmentChars = 8000;
inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 100;

enum class ProviderKind { kOpenAICompatible, kMock };
enum class Source { kGenerated, kHuman };
enum class Veracity { kReal, kFake };
enum class Arm { kControl, kInoculation };
enum class AgeBand { k18To24, k25To34, k35To44, k45To54, k55To64, k65Plus };
enum class Education { kSecondary, kBachelor, kMaster, kDoctorate, kOther };

std::string_view to_string(ProviderKind v);
std::string_view to_string(Source v);
std::string_view to_string(Veracity v);
std::string_view to_string(Arm v);
std::string_view to_string(AgeBand v);
std::string_view to_string(Education v);

std::optional<ProviderKind> parse_provider_kind(std::string_view s);
std::optional<Source> parse_source(std::string_view s);
std::optional<Veracity> parse_veracity(std::string_view s);
std::optional<Arm> parse_arm(std::string_view s);
/// Accepts "25-34" and the en-dash spelling "25–34".
std::optional<AgeBand> parse_age_band(std::string_view s);
std::optional<Education> parse_education(std::string_view s);

struct ModelSpec {
  ProviderKind provider = ProviderKind::kMock;
  std::string model_name;
  std::string api_base;
  std::optional<std::string> model_version_pin;

  bool operator==(const ModelSpec&) const = default;
};

/// Placeholders: {style} {format} {language} {veracity} {topic}. `{{` and `}}`
/// are literal braces.
struct PromptTemplate {
  std::string template_id;
  std::string system_template;
  std::string user_template;

  bool operator==(const PromptTemplate&) const = default;
};

struct GenerationCampaign {
  Uuid campaign_id;
  std::string name;
  std::vector<ModelSpec> models;
  std::vector<double> temperatures;
  std::vector<std::string> styles;
  std::vector<std::string> formats;
  std::vector<std::string> languages;
  std::vector<Veracity> veracity_targets;
  int replicates_per_cell = 1;
  std::vector<std::string> topics;
  std::string prompt_template_id;
  std::uint64_t seed = 0;
  Timestamp created_at{};
  // Inline template, kept with the stored campaign so prompts can be
  // re-rendered from storage alone.
  std::optional<PromptTemplate> prompt_template;

  std::uint64_t cell_count() const;
  std::uint64_t task_count() const { return cell_count() * static_cast<std::uint64_t>(replicates_per_cell); }

  bool operator==(const GenerationCampaign&) const = default;
};

struct NewsFragment {
  Uuid fragment_id;
  std::optional<Uuid> campaign_id;
  Source source = Source::kHuman;
  std::optional<std::string> model;
  std::optional<std::string> model_version;
  std::optional<double> temperature;
  std::string style;
  std::string format;
  std::string language;
  Veracity veracity_label = Veracity::kReal;
  std::optional<std::string> prompt_system;
  std::optional<std::string> prompt_user;
  Json generation_params = Json::object();
  std::string text;
  std::string content_hash;
  Timestamp created_at{};

  bool operator==(const NewsFragment&) const = default;
};

struct ParticipantProfile {
  std::string participant_id;
  AgeBand age_band = AgeBand::k18To24;
  Education education = Education::kOther;
  std::optional<int> political_orientation;  // 1..7, nullopt = undisclosed
  std::optional<std::string> country;        // ISO-3166 alpha-2, nullopt = undisclosed
  std::string ui_language = "en";
  bool consent = false;
  Timestamp created_at{};

  bool operator==(const ParticipantProfile&) const = default;
};

struct Session {
  Uuid session_id;
  std::string participant_id;
  std::optional<Uuid> campaign_id;
  Arm arm = Arm::kControl;
  std::vector<Uuid> served_fragment_ids;
  int next_trial_index = 0;
  Timestamp started_at{};
  std::optional<Timestamp> completed_at;

  bool operator==(const Session&) const = default;
};

struct Judgment {
  Uuid judgment_id;
  Uuid fragment_id;
  Uuid session_id;
  std::string participant_id;
  int origin_score = 0;       // 0 = definitely human, 100 = definitely machine-generated
  int veracity_score = 0;     // 0 = definitely legitimate, 100 = definitely fake
  int familiarity_score = 0;  // 0 = not familiar, 100 = very familiar
  std::int64_t latency_ms_client = 0;
  std::int64_t latency_ms_server = 0;
  int trial_index = 0;
  Arm arm = Arm::kControl;
  Timestamp created_at{};

  bool operator==(const Judgment&) const = default;
};

/// What a participant sees for one trial. Carries no label or provenance field.
struct TrialPresentation {
  Uuid session_id;
  int trial_index = 0;
  Uuid fragment_id;
  std::string text;
  Timestamp presented_at{};
  bool prebunk_shown = false;
  std::optional<std::string> prebunk_text;

  bool operator==(const TrialPresentation&) const = default;
};

void to_json(Json& j, const ModelSpec& v);
void to_json(Json& j, const PromptTemplate& v);
void to_json(Json& j, const GenerationCampaign& v);
void to_json(Json& j, const NewsFragment& v);
void to_json(Json& j, const ParticipantProfile& v);
void to_json(Json& j, const Session& v);
void to_json(Json& j, const Judgment& v);
void to_json(Json& j, const TrialPresentation& v);

/// Canonical single-line encoding.
template <typename T>
std::string canonical(const T& value) {
  return Json(value).dump();
}

// Parsers validate every field and collect all violations before throwing a
// single Error (code of the first violation, full list in violations()).

struct CampaignValidation {
  GenerationCampaign campaign;
  std::uint64_t cell_count = 0;
  std::uint64_t task_count = 0;
};

CampaignValidation validate_campaign(const Json& document);
PromptTemplate parse_prompt_template(const Json& document);
NewsFragment validate_fragment(const Json& document);
ParticipantProfile validate_participant(const Json& document);
Session validate_session(const Json& document);
/// Schema check of a stored judgment document (scores, ids, timestamps).
Judgment parse_judgment(const Json& document);
TrialPresentation parse_presentation(const Json& document);

/// Session-side state needed to accept a judgment.
struct PendingTrial {
  int trial_index = 0;
  Uuid fragment_id;
  Timestamp presented_at{};
};

struct JudgmentContext {
  const Session* session = nullptr;
  std::optional<PendingTrial> pending;
  bool participant_consent = false;
  Timestamp received_at{};
  Uuid judgment_id;
};

/// Validates a participant's submission against the session. The document
/// holds origin_score, veracity_score, familiarity_score and latency_ms_client;
/// trial_index and fragment_id are optional cross-checks.
Judgment validate_judgment(const Json& document, const JudgmentContext& context);

/// Generated fragments carry model, prompts and generation_params; human ones
/// carry none of model, temperature or prompts.
bool has_complete_provenance(const NewsFragment& fragment);

std::size_t utf8_length(std::string_view text);
bool is_valid_utf8(std::string_view text);
bool is_bcp47_tag(std::string_view tag);
bool is_valid_url(std::string_view url);

}  // namespace perceptionlab
