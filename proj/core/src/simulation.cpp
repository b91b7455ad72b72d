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

#include "perceptionlab/simulation.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "perceptionlab/hash.hpp"
#include "perceptionlab/stats.hpp"

namespace perceptionlab::analytics {
namespace {

using stats::normal_cdf;
using stats::normal_quantile;
using stats::uniform01;
using stats::uniform_index;

constexpr std::size_t kStrata = 4;  // generated-fake, generated-real, human-fake, human-real

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

// Evidence drawn from N(mean, 1) restricted to one side of `criterion`.
double truncated_normal(double mean, double criterion, bool above, std::mt19937_64& rng) {
  constexpr double kEps = 1e-15;
  const double edge = normal_cdf(criterion - mean);
  const double lo = above ? edge : 0.0;
  const double hi = above ? 1.0 : edge;
  const double u = std::clamp(lo + uniform01(rng) * (hi - lo), kEps, 1.0 - kEps);
  return mean + normal_quantile(u);
}

int score_for(bool high, double confidence) {
  const int magnitude = static_cast<int>(std::lround(50.0 * (2.0 * std::max(confidence, 0.5) - 1.0)));
  return high ? std::min(100, 50 + magnitude) : std::max(0, 50 - std::max(1, magnitude));
}

struct Trial {
  std::size_t fragment = 0;
  bool generated = false;
  bool fake = false;
  int familiarity = 0;
  double p_origin = 0.0;
  double p_veracity = 0.0;
  bool correct_origin = false;
  bool correct_veracity = false;
};

// Rounds a participants x positions matrix of probabilities (restricted to
// cells of one class) to 0/1 so that every participant's row and every
// position prefix of the whole matrix stay within one of its expected count.
void stratified_round(std::vector<std::vector<Trial>>& trials, bool Trial::*member_class, bool class_value,
                      double Trial::*prob, bool Trial::*out, std::mt19937_64& rng) {
  const std::size_t n = trials.size();
  const std::size_t t_count = n ? trials[0].size() : 0;
  std::vector<double> residual(n);
  for (double& r : residual) r = uniform01(rng) - 0.5;
  double total = uniform01(rng);

  std::vector<std::pair<double, double>> keyed;  // (priority, tie-break)
  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < t_count; ++t) {
    rows.clear();
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (trials[i][t].*member_class == class_value) {
        rows.push_back(i);
        mass += trials[i][t].*prob;
      }
    }
    const auto ones = static_cast<std::size_t>(std::floor(total + mass) - std::floor(total));
    total += mass;
    keyed.resize(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) keyed[k] = {residual[rows[k]] + trials[rows[k]][t].*prob, uniform01(rng)};
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return keyed[l] > keyed[r]; });
    for (std::size_t k = 0; k < order.size(); ++k) {
      Trial& cell = trials[rows[order[k]]][t];
      cell.*out = k < ones;
      residual[rows[order[k]]] += cell.*prob - (cell.*out ? 1.0 : 0.0);
    }
  }
}

std::vector<double> symmetric_biases(int n, double sd, std::mt19937_64& rng) {
  // Antithetic stratified quantiles: each draw is paired with its mirror.
  std::vector<double> b(static_cast<std::size_t>(n), 0.0);
  const int pairs = n / 2;
  for (int k = 0; k < pairs; ++k) {
    const double u = (k + uniform01(rng)) / (2.0 * pairs);
    const double z = sd > 0 ? sd * normal_quantile(std::max(u, 1e-12)) : 0.0;
    b[2 * k] = z;
    b[2 * k + 1] = -z;
  }
  shuffle(b, rng);
  return b;
}

}  // namespace

void CohortSpec::validate() const {
  std::vector<Violation> v;
  auto finite = [&](double x, const char* field) {
    if (!std::isfinite(x)) v.push_back({ErrorCode::kInvalidValue, field, "must be finite"});
  };
  if (n_participants < 1) v.push_back({ErrorCode::kOutOfRange, "n_participants", "must be >= 1"});
  if (trials_per_participant < 2 || trials_per_participant % 2 != 0) {
    v.push_back({ErrorCode::kOutOfRange, "trials_per_participant", "must be even and >= 2"});
  }
  finite(true_dprime_origin, "true_dprime_origin");
  finite(true_dprime_veracity, "true_dprime_veracity");
  finite(suspicion_bias_sd, "suspicion_bias_sd");
  finite(fatigue_drop_fake_pp, "fatigue_drop_fake_pp");
  finite(fatigue_drop_real_pp, "fatigue_drop_real_pp");
  finite(familiarity_effect, "familiarity_effect");
  finite(inoculation_benefit_pp, "inoculation_benefit_pp");
  if (suspicion_bias_sd < 0) v.push_back({ErrorCode::kOutOfRange, "suspicion_bias_sd", "must be >= 0"});
  if (pool_size != 0 && (pool_size < trials_per_participant || pool_size % 4 != 0)) {
    v.push_back({ErrorCode::kOutOfRange, "pool_size", "must be a multiple of 4 and >= trials_per_participant"});
  }
  if (!v.empty()) {
    const ErrorCode code = v.front().code;
    std::string msg = v.front().field + ": " + v.front().message;
    throw Error(code, std::move(msg), std::move(v));
  }
}

int CohortSpec::effective_pool_size() const {
  if (pool_size != 0) return pool_size;
  return (trials_per_participant + 3) / 4 * 4;
}

CohortSpec CohortSpec::from_json(const Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kSchemaViolation, "cohort spec must be a JSON object");
  CohortSpec s;
  try {
    s.n_participants = doc.value("n_participants", s.n_participants);
    s.trials_per_participant = doc.value("trials_per_participant", s.trials_per_participant);
    s.true_dprime_origin = doc.value("true_dprime_origin", s.true_dprime_origin);
    s.true_dprime_veracity = doc.value("true_dprime_veracity", s.true_dprime_veracity);
    s.suspicion_bias_sd = doc.value("suspicion_bias_sd", s.suspicion_bias_sd);
    s.fatigue_drop_fake_pp = doc.value("fatigue_drop_fake_pp", s.fatigue_drop_fake_pp);
    s.fatigue_drop_real_pp = doc.value("fatigue_drop_real_pp", s.fatigue_drop_real_pp);
    s.familiarity_effect = doc.value("familiarity_effect", s.familiarity_effect);
    s.inoculation_benefit_pp = doc.value("inoculation_benefit_pp", s.inoculation_benefit_pp);
    s.seed = doc.value("seed", s.seed);
    s.pool_size = doc.value("pool_size", s.pool_size);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("cohort spec: ") + e.what());
  }
  s.validate();
  return s;
}

void to_json(Json& j, const CohortSpec& v) {
  j = Json{{"n_participants", v.n_participants},
           {"trials_per_participant", v.trials_per_participant},
           {"true_dprime_origin", v.true_dprime_origin},
           {"true_dprime_veracity", v.true_dprime_veracity},
           {"suspicion_bias_sd", v.suspicion_bias_sd},
           {"fatigue_drop_fake_pp", v.fatigue_drop_fake_pp},
           {"fatigue_drop_real_pp", v.fatigue_drop_real_pp},
           {"familiarity_effect", v.familiarity_effect},
           {"inoculation_benefit_pp", v.inoculation_benefit_pp},
           {"seed", v.seed},
           {"pool_size", v.pool_size}};
}

SimulatedCohort simulate_cohort(const CohortSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::string tag = "sim|" + std::to_string(spec.seed) + "|";
  const Timestamp base = *parse_rfc3339("2026-01-01T00:00:00.000Z");
  const Uuid campaign_id = Uuid::from_name(tag + "campaign");
  const auto n = static_cast<std::size_t>(spec.n_participants);
  const auto trials = static_cast<std::size_t>(spec.trials_per_participant);
  const auto pool = static_cast<std::size_t>(spec.effective_pool_size());

  SimulatedCohort out;
  for (std::size_t k = 0; k < pool; ++k) {
    const std::size_t stratum = k % kStrata;
    NewsFragment f;
    f.fragment_id = Uuid::from_name(tag + "fragment|" + std::to_string(k));
    f.source = stratum < 2 ? Source::kGenerated : Source::kHuman;
    f.veracity_label = stratum % 2 == 0 ? Veracity::kFake : Veracity::kReal;
    f.style = "news";
    f.format = "article";
    f.language = "en";
    f.text = "Simulated news fragment " + std::to_string(k) + ".";
    f.content_hash = content_hash(f.text);
    f.created_at = base;
    if (f.source == Source::kGenerated) {
      f.campaign_id = campaign_id;
      f.model = "sim-observer-lm";
      f.model_version = "1";
      f.temperature = 0.7;
      f.prompt_system = "simulated";
      f.prompt_user = "simulated";
      f.generation_params = Json{{"simulated", true}, {"seed", spec.seed}};
    }
    out.fragments.push_back(std::move(f));
  }

  const std::vector<double> bias = symmetric_biases(spec.n_participants, spec.suspicion_bias_sd, rng);

  std::vector<std::vector<Trial>> grid(n, std::vector<Trial>(trials));
  for (std::size_t i = 0; i < n; ++i) {
    const Arm arm = i % 2 ? Arm::kInoculation : Arm::kControl;
    std::array<std::vector<std::size_t>, kStrata> queues;
    for (std::size_t k = 0; k < pool; ++k) queues[k % kStrata].push_back(k);
    for (auto& q : queues) shuffle(q, rng);
    std::vector<std::size_t> order;
    for (std::size_t block = 0; order.size() < trials; ++block) {
      std::vector<std::size_t> b;
      for (auto& q : queues) b.push_back(q[block]);
      shuffle(b, rng);
      for (std::size_t k : b) {
        if (order.size() < trials) order.push_back(k);
      }
    }
    for (std::size_t t = 0; t < trials; ++t) {
      Trial& tr = grid[i][t];
      tr.fragment = order[t];
      tr.generated = out.fragments[order[t]].source == Source::kGenerated;
      tr.fake = out.fragments[order[t]].veracity_label == Veracity::kFake;
      tr.familiarity = static_cast<int>(uniform_index(rng, 101));

      const double half_o = spec.true_dprime_origin / 2.0;
      tr.p_origin = normal_cdf(tr.generated ? half_o + bias[i] : half_o - bias[i]);

      const double half_v = spec.true_dprime_veracity / 2.0;
      double p = normal_cdf(tr.fake ? half_v + bias[i] : half_v - bias[i]);
      if (spec.familiarity_effect != 0.0) {
        p = std::clamp(p, 1e-12, 1.0 - 1e-12);
        p = logistic(logit(p) + spec.familiarity_effect * (tr.familiarity - 50) / 50.0);
      }
      const double drop = tr.fake ? spec.fatigue_drop_fake_pp : spec.fatigue_drop_real_pp;
      p += drop / 100.0 * (static_cast<double>(trials) - 1.0 - 2.0 * static_cast<double>(t)) / static_cast<double>(trials);
      if (arm == Arm::kInoculation) p += spec.inoculation_benefit_pp / 100.0;
      tr.p_veracity = std::clamp(p, 0.0, 1.0);
    }
  }

  for (bool value : {true, false}) {
    stratified_round(grid, &Trial::generated, value, &Trial::p_origin, &Trial::correct_origin, rng);
    stratified_round(grid, &Trial::fake, value, &Trial::p_veracity, &Trial::correct_veracity, rng);
  }

  static constexpr AgeBand kAges[] = {AgeBand::k18To24, AgeBand::k25To34, AgeBand::k35To44,
                                      AgeBand::k45To54, AgeBand::k55To64, AgeBand::k65Plus};
  static constexpr Education kEducation[] = {Education::kSecondary, Education::kBachelor, Education::kMaster,
                                             Education::kDoctorate, Education::kOther};
  static constexpr const char* kCountries[] = {"DE", "US", "GB", "FR", "IT"};

  for (std::size_t i = 0; i < n; ++i) {
    ParticipantProfile p;
    p.participant_id = "p-" + to_hex(sha256(tag + "participant|" + std::to_string(i))).substr(0, 32);
    p.age_band = kAges[uniform_index(rng, std::size(kAges))];
    p.education = kEducation[uniform_index(rng, std::size(kEducation))];
    const auto orientation = static_cast<int>(uniform_index(rng, 8));
    if (orientation > 0) p.political_orientation = orientation;
    const auto country = uniform_index(rng, std::size(kCountries) + 1);
    if (country < std::size(kCountries)) p.country = kCountries[country];
    p.ui_language = "en";
    p.consent = true;
    p.created_at = base + std::chrono::minutes(static_cast<int>(i));

    Session s;
    s.session_id = Uuid::from_name(tag + "session|" + std::to_string(i));
    s.participant_id = p.participant_id;
    s.campaign_id = campaign_id;
    s.arm = i % 2 ? Arm::kInoculation : Arm::kControl;
    s.started_at = p.created_at + std::chrono::seconds(30);
    s.next_trial_index = spec.trials_per_participant;

    Timestamp clock = s.started_at;
    for (std::size_t t = 0; t < trials; ++t) {
      const Trial& tr = grid[i][t];
      Judgment j;
      j.judgment_id = Uuid::from_name(tag + "judgment|" + std::to_string(i) + "|" + std::to_string(t));
      j.fragment_id = out.fragments[tr.fragment].fragment_id;
      j.session_id = s.session_id;
      j.participant_id = p.participant_id;
      j.trial_index = static_cast<int>(t);
      j.arm = s.arm;
      j.familiarity_score = tr.familiarity;

      auto respond = [&](bool signal, bool correct, double dprime) {
        const bool high = correct == signal;
        const double mean = signal ? dprime / 2.0 : -dprime / 2.0;
        const double evidence = truncated_normal(mean, -bias[i], high, rng);
        const double posterior_high = logistic(dprime * evidence);
        return score_for(high, high ? posterior_high : 1.0 - posterior_high);
      };
      j.origin_score = respond(tr.generated, tr.correct_origin, spec.true_dprime_origin);
      j.veracity_score = respond(tr.fake, tr.correct_veracity, spec.true_dprime_veracity);

      j.latency_ms_client = 1500 + static_cast<std::int64_t>(uniform_index(rng, 4000));
      j.latency_ms_server = j.latency_ms_client + 20 + static_cast<std::int64_t>(uniform_index(rng, 80));
      clock += std::chrono::milliseconds(j.latency_ms_server);
      j.created_at = clock;
      s.served_fragment_ids.push_back(j.fragment_id);
      out.judgments.push_back(std::move(j));
    }
    s.completed_at = clock;
    out.participants.push_back(std::move(p));
    out.sessions.push_back(std::move(s));
  }
  return out;
}

}  // namespace perceptionlab::analytics
