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

#include <cstdint>
#include <vector>

#include "perceptionlab/analytics.hpp"
#include "perceptionlab/domain.hpp"

namespace perceptionlab::analytics {

/// Parameters of a synthetic cohort. Magnitudes are in the units the metrics
/// report: d' in standard deviations, drops and benefits in percentage points.
struct CohortSpec {
  int n_participants = 200;
  int trials_per_participant = 40;
  double true_dprime_origin = 0.0;
  double true_dprime_veracity = 1.0;
  double suspicion_bias_sd = 0.0;
  double fatigue_drop_fake_pp = 0.0;
  double fatigue_drop_real_pp = 0.0;
  double familiarity_effect = 0.0;
  double inoculation_benefit_pp = 0.0;
  std::uint64_t seed = 0;
  int pool_size = 0;  // 0: trials_per_participant rounded up to a multiple of 4

  void validate() const;
  int effective_pool_size() const;

  static CohortSpec from_json(const Json& document);
};

void to_json(Json& j, const CohortSpec& v);

struct SimulatedCohort {
  std::vector<NewsFragment> fragments;
  std::vector<ParticipantProfile> participants;
  std::vector<Session> sessions;
  std::vector<Judgment> judgments;

  Dataset dataset() const { return Dataset(fragments, judgments, participants); }
};

/// Generates a balanced pool and every participant's responses from an
/// equal-variance signal-detection observer:
///
///   evidence ~ N(±d'/2, 1), response "high" when evidence > -bias,
///   bias_i ~ Normal(0, suspicion_bias_sd).
///
/// The veracity correct-rate is then shifted by familiarity on the logit
/// scale, decays linearly over the session by the planted per-class drops,
/// and gains the inoculation benefit in that arm. Correct/incorrect outcomes
/// are drawn by stratified rounding (each participant's and each trial
/// position's realized count stays within one of its expectation), and the
/// reported score is the observer's posterior confidence given evidence
/// drawn on the chosen side of the criterion. Fully determined by the spec.
SimulatedCohort simulate_cohort(const CohortSpec& spec);

}  // namespace perceptionlab::analytics
