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

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <variant>

#include "perceptionlab/domain.hpp"
#include "perceptionlab/sampler.hpp"
#include "perceptionlab/storage.hpp"

namespace perceptionlab::study {

inline constexpr int kDefaultSessionTrials = 40;

/// Service config file: {listen_addr, session_trials, campaign_id,
/// prebunk_text_path, storage_path}, plus optional static_dir for the
/// participant UI bundle.
struct ServiceConfig {
  std::string listen_addr = "127.0.0.1:8080";
  int session_trials = kDefaultSessionTrials;
  std::optional<Uuid> campaign_id;
  std::optional<std::string> prebunk_text_path;
  std::string storage_path = "data";
  std::optional<std::string> static_dir;

  static ServiceConfig from_json(const Json& document);
  static ServiceConfig load(const std::string& path);
};

struct StudyOptions {
  int session_trials = kDefaultSessionTrials;
  std::optional<Uuid> default_campaign_id;
  std::optional<std::string> prebunk_text;
};

struct StudyComplete {
  Uuid session_id;
  int trials_completed = 0;
};

using NextResult = std::variant<TrialPresentation, StudyComplete>;

struct JudgmentAck {
  int trial_index = 0;
  Uuid judgment_id;
};

void to_json(Json& j, const StudyComplete& v);
void to_json(Json& j, const JudgmentAck& v);

/// Arm by parity of SHA-256(participant_id): stable per participant.
Arm assign_arm(std::string_view participant_id);

/// The participant-facing experiment loop. State lives in the document store
/// (participants, sessions, presentations, judgments); constructing a service
/// over an existing store replays it, so a restart resumes every session.
class StudyService {
 public:
  StudyService(storage::DocumentStore& store, StudyOptions options, const Clock& clock);

  /// Validates banded demographics and issues a pseudonymous token. Consent
  /// false still issues a token; start_session refuses it.
  std::string register_participant(const Json& demographics);

  Session start_session(const std::string& participant_id, std::optional<Uuid> campaign_id = std::nullopt,
                        std::optional<Arm> arm_override = std::nullopt);

  NextResult next_fragment(const Uuid& session_id);

  JudgmentAck submit_judgment(const Uuid& session_id, const Json& body);

  std::optional<Session> session(const Uuid& session_id) const;

  /// Counts of the sampler serving `campaign_id` (nullopt = unscoped pool).
  SamplerCounts sampler_counts(std::optional<Uuid> campaign_id) const;
  /// Fragment ids of the same pool, aligned with SamplerCounts::per_fragment.
  std::vector<Uuid> pool_fragments(std::optional<Uuid> campaign_id) const;

  const StudyOptions& options() const { return options_; }

 private:
  struct SessionState {
    std::mutex mu;
    Session session;
    std::optional<PendingTrial> pending;
    std::uint64_t rng_seed = 0;
  };

  struct PoolState {
    std::unique_ptr<StratifiedSampler> sampler;
  };

  static std::string pool_key(const std::optional<Uuid>& campaign_id);
  // Callers hold pools_mu_.
  PoolState& pool_for(const std::optional<Uuid>& campaign_id);
  std::uint64_t campaign_seed(const std::optional<Uuid>& campaign_id) const;
  std::shared_ptr<SessionState> find_session(const Uuid& id) const;
  void recover();

  storage::DocumentStore& store_;
  StudyOptions options_;
  const Clock& clock_;

  mutable std::shared_mutex sessions_mu_;
  std::unordered_map<std::string, std::shared_ptr<SessionState>> sessions_;

  mutable std::mutex participants_mu_;
  std::unordered_map<std::string, bool> consent_;

  mutable std::mutex pools_mu_;
  std::map<std::string, PoolState> pools_;
};

}  // namespace perceptionlab::study
