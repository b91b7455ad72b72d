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

#include "perceptionlab/study_service.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "perceptionlab/hash.hpp"

namespace perceptionlab::study {
namespace {

using storage::Collection;

std::string new_participant_token() {
  static std::mutex mu;
  static std::mt19937_64 engine{std::random_device{}()};
  std::lock_guard<std::mutex> lock(mu);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string token = "p-";
  for (int i = 0; i < 2; ++i) {
    std::uint64_t r = engine();
    for (int j = 0; j < 16; ++j) token.push_back(kHex[(r >> (4 * j)) & 0xf]);
  }
  return token;
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kSchemaViolation, "service config must be a JSON object");
  ServiceConfig c;
  try {
    c.listen_addr = doc.value("listen_addr", c.listen_addr);
    c.session_trials = doc.value("session_trials", c.session_trials);
    if (doc.contains("campaign_id") && !doc["campaign_id"].is_null()) {
      c.campaign_id = Uuid::parse(doc["campaign_id"].get<std::string>());
      if (!c.campaign_id) throw Error(ErrorCode::kInvalidValue, "campaign_id must be a UUID");
    }
    if (doc.contains("prebunk_text_path") && !doc["prebunk_text_path"].is_null())
      c.prebunk_text_path = doc["prebunk_text_path"].get<std::string>();
    c.storage_path = doc.value("storage_path", c.storage_path);
    if (doc.contains("static_dir") && !doc["static_dir"].is_null()) c.static_dir = doc["static_dir"].get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("service config: ") + e.what());
  }
  if (c.session_trials < 1) throw Error(ErrorCode::kOutOfRange, "session_trials must be >= 1");
  return c;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidValue, "cannot read service config " + path);
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kSchemaViolation, path + " is not valid JSON");
  return from_json(doc);
}

void to_json(Json& j, const StudyComplete& v) {
  j = Json{{"status", "complete"}, {"session_id", v.session_id.to_string()}, {"trials_completed", v.trials_completed}};
}

void to_json(Json& j, const JudgmentAck& v) {
  j = Json{{"trial_index", v.trial_index}, {"judgment_id", v.judgment_id.to_string()}};
}

Arm assign_arm(std::string_view participant_id) {
  return (sha256(participant_id)[31] & 1) ? Arm::kInoculation : Arm::kControl;
}

StudyService::StudyService(storage::DocumentStore& store, StudyOptions options, const Clock& clock)
    : store_(store), options_(std::move(options)), clock_(clock) {
  if (options_.session_trials < 1) throw Error(ErrorCode::kOutOfRange, "session_trials must be >= 1");
  recover();
}

std::string StudyService::pool_key(const std::optional<Uuid>& campaign_id) {
  return campaign_id ? campaign_id->to_string() : std::string("*");
}

StudyService::PoolState& StudyService::pool_for(const std::optional<Uuid>& campaign_id) {
  const std::string key = pool_key(campaign_id);
  auto it = pools_.find(key);
  if (it != pools_.end()) return it->second;

  // Pool: the campaign's generated fragments plus every human control.
  std::vector<PoolEntry> entries;
  for (const Json& doc : store_.query(Collection::kFragments)) {
    const NewsFragment f = validate_fragment(doc);
    const bool in_pool = !campaign_id || f.source == Source::kHuman || f.campaign_id == campaign_id;
    if (in_pool) entries.push_back({f.fragment_id, f.source, f.veracity_label});
  }
  PoolState state;
  state.sampler = std::make_unique<StratifiedSampler>(std::move(entries));
  return pools_.emplace(key, std::move(state)).first->second;
}

std::uint64_t StudyService::campaign_seed(const std::optional<Uuid>& campaign_id) const {
  if (!campaign_id) return 0;
  auto doc = store_.get(Collection::kCampaigns, campaign_id->to_string());
  if (!doc) return 0;
  return doc->value("seed", std::uint64_t{0});
}

void StudyService::recover() {
  for (const Json& doc : store_.query(Collection::kParticipants)) {
    consent_[doc.at("participant_id").get<std::string>()] = doc.at("consent").get<bool>();
  }
  for (const Json& doc : store_.query(Collection::kSessions)) {
    auto state = std::make_shared<SessionState>();
    state->session = validate_session(doc);
    state->rng_seed = session_seed(campaign_seed(state->session.campaign_id), state->session.session_id);
    sessions_[state->session.session_id.to_string()] = std::move(state);
  }
  // Replay in insertion order: presentations drive served counts and the
  // pending trial, judgments close trials.
  std::lock_guard<std::mutex> pools_lock(pools_mu_);
  for (const Json& doc : store_.query(Collection::kPresentations)) {
    const TrialPresentation p = parse_presentation(doc);
    auto it = sessions_.find(p.session_id.to_string());
    if (it == sessions_.end()) continue;
    SessionState& s = *it->second;
    s.session.served_fragment_ids.push_back(p.fragment_id);
    s.pending = PendingTrial{p.trial_index, p.fragment_id, p.presented_at};
    PoolState& pool = pool_for(s.session.campaign_id);
    if (auto idx = pool.sampler->index_of(p.fragment_id)) pool.sampler->record_served(*idx);
  }
  for (const Json& doc : store_.query(Collection::kJudgments)) {
    const Judgment j = parse_judgment(doc);
    auto it = sessions_.find(j.session_id.to_string());
    if (it == sessions_.end()) continue;
    SessionState& s = *it->second;
    s.session.next_trial_index = std::max(s.session.next_trial_index, j.trial_index + 1);
    if (s.pending && s.pending->trial_index == j.trial_index) s.pending.reset();
    if (s.session.next_trial_index >= options_.session_trials) s.session.completed_at = j.created_at;
  }
}

std::string StudyService::register_participant(const Json& demographics) {
  if (!demographics.is_object()) throw Error(ErrorCode::kSchemaViolation, "demographics must be a JSON object");
  Json doc = demographics;
  const std::string token = new_participant_token();
  doc["participant_id"] = token;
  doc["created_at"] = format_rfc3339(clock_.now());
  if (!doc.contains("ui_language")) doc["ui_language"] = "en";
  const ParticipantProfile profile = validate_participant(doc);
  store_.insert(Collection::kParticipants, Json(profile));
  std::lock_guard<std::mutex> lock(participants_mu_);
  consent_[token] = profile.consent;
  return token;
}

Session StudyService::start_session(const std::string& participant_id, std::optional<Uuid> campaign_id,
                                    std::optional<Arm> arm_override) {
  {
    std::lock_guard<std::mutex> lock(participants_mu_);
    auto it = consent_.find(participant_id);
    if (it == consent_.end()) throw Error(ErrorCode::kUnknownParticipant, "unknown participant " + participant_id);
    if (!it->second) throw Error(ErrorCode::kNoConsent, "participant " + participant_id + " has not consented");
  }
  auto state = std::make_shared<SessionState>();
  Session& s = state->session;
  s.session_id = Uuid::random();
  s.participant_id = participant_id;
  s.campaign_id = campaign_id ? campaign_id : options_.default_campaign_id;
  s.arm = arm_override ? *arm_override : assign_arm(participant_id);
  s.started_at = clock_.now();
  state->rng_seed = session_seed(campaign_seed(s.campaign_id), s.session_id);
  store_.insert(Collection::kSessions, Json(s));
  {
    std::lock_guard<std::mutex> lock(pools_mu_);
    pool_for(s.campaign_id);
  }
  Session copy = s;
  std::unique_lock lock(sessions_mu_);
  sessions_[s.session_id.to_string()] = std::move(state);
  return copy;
}

std::shared_ptr<StudyService::SessionState> StudyService::find_session(const Uuid& id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(id.to_string());
  if (it == sessions_.end()) throw Error(ErrorCode::kUnknownSession, "unknown session " + id.to_string());
  return it->second;
}

NextResult StudyService::next_fragment(const Uuid& session_id) {
  auto state = find_session(session_id);
  std::lock_guard<std::mutex> session_lock(state->mu);
  Session& s = state->session;
  if (state->pending) {
    throw Error(ErrorCode::kPendingTrial, "trial " + std::to_string(state->pending->trial_index) + " is unanswered");
  }
  auto complete = [&]() -> NextResult {
    if (!s.completed_at) s.completed_at = clock_.now();
    return StudyComplete{s.session_id, s.next_trial_index};
  };
  if (s.completed_at || s.next_trial_index >= options_.session_trials) return complete();

  const int trial_index = s.next_trial_index;
  std::size_t chosen = 0;
  Uuid fragment_id;
  StratifiedSampler* sampler = nullptr;
  {
    std::lock_guard<std::mutex> lock(pools_mu_);
    sampler = pool_for(s.campaign_id).sampler.get();
    std::vector<bool> seen(sampler->pool_size(), false);
    for (const Uuid& id : s.served_fragment_ids) {
      if (auto idx = sampler->index_of(id)) seen[*idx] = true;
    }
    std::mt19937_64 rng = trial_rng(state->rng_seed, trial_index);
    auto pick = sampler->choose(seen, rng);
    if (!pick) return complete();
    chosen = *pick;
    fragment_id = sampler->entry(chosen).fragment_id;
    sampler->record_served(chosen);
  }

  auto fragment_doc = store_.get(Collection::kFragments, fragment_id.to_string());
  TrialPresentation p;
  p.session_id = s.session_id;
  p.trial_index = trial_index;
  p.fragment_id = fragment_id;
  p.text = fragment_doc ? fragment_doc->at("text").get<std::string>() : std::string();
  p.presented_at = clock_.now();
  p.prebunk_shown = s.arm == Arm::kInoculation && trial_index == 0;
  if (p.prebunk_shown && options_.prebunk_text) p.prebunk_text = options_.prebunk_text;
  try {
    if (!fragment_doc) throw Error(ErrorCode::kStorageError, "fragment " + fragment_id.to_string() + " vanished");
    store_.insert(Collection::kPresentations, Json(p));
  } catch (...) {
    std::lock_guard<std::mutex> lock(pools_mu_);
    sampler->unrecord_served(chosen);
    throw;
  }
  s.served_fragment_ids.push_back(fragment_id);
  state->pending = PendingTrial{trial_index, fragment_id, p.presented_at};
  return p;
}

JudgmentAck StudyService::submit_judgment(const Uuid& session_id, const Json& body) {
  auto state = find_session(session_id);
  std::lock_guard<std::mutex> session_lock(state->mu);
  Session& s = state->session;

  JudgmentContext ctx;
  ctx.session = &s;
  ctx.pending = state->pending;
  {
    std::lock_guard<std::mutex> lock(participants_mu_);
    auto it = consent_.find(s.participant_id);
    ctx.participant_consent = it != consent_.end() && it->second;
  }
  ctx.received_at = clock_.now();
  ctx.judgment_id = Uuid::random();
  const Judgment j = validate_judgment(body, ctx);
  store_.insert(Collection::kJudgments, Json(j));
  state->pending.reset();
  s.next_trial_index = j.trial_index + 1;
  if (s.next_trial_index >= options_.session_trials) s.completed_at = j.created_at;
  return {j.trial_index, j.judgment_id};
}

std::optional<Session> StudyService::session(const Uuid& session_id) const {
  std::shared_ptr<SessionState> state;
  try {
    state = find_session(session_id);
  } catch (const Error&) {
    return std::nullopt;
  }
  std::lock_guard<std::mutex> lock(state->mu);
  return state->session;
}

SamplerCounts StudyService::sampler_counts(std::optional<Uuid> campaign_id) const {
  std::lock_guard<std::mutex> lock(pools_mu_);
  auto it = pools_.find(pool_key(campaign_id));
  if (it == pools_.end()) return {};
  return it->second.sampler->counts();
}

std::vector<Uuid> StudyService::pool_fragments(std::optional<Uuid> campaign_id) const {
  std::lock_guard<std::mutex> lock(pools_mu_);
  std::vector<Uuid> out;
  auto it = pools_.find(pool_key(campaign_id));
  if (it == pools_.end()) return out;
  const auto& sampler = *it->second.sampler;
  for (std::size_t i = 0; i < sampler.pool_size(); ++i) out.push_back(sampler.entry(i).fragment_id);
  return out;
}

}  // namespace perceptionlab::study
