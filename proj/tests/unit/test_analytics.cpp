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

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles/normal_quantile.hpp"
#include "perceptionlab/analytics.hpp"
#include "perceptionlab/simulation.hpp"
#include "perceptionlab/stats.hpp"
#include "support/test_support.hpp"

namespace perceptionlab::analytics {
namespace {

using perceptionlab::testing::generated_fragment_doc;
using perceptionlab::testing::human_fragment_doc;
using perceptionlab::testing::participant_doc;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidValue;
}

// Small hand-built datasets: judgments are appended one at a time.
class Builder {
 public:
  const NewsFragment& fragment(const std::string& text, Source source, Veracity veracity,
                               const std::string& style = "tabloid") {
    Json doc = source == Source::kGenerated ? generated_fragment_doc(text, std::string(to_string(veracity)))
                                            : human_fragment_doc(text, std::string(to_string(veracity)), style);
    doc["style"] = style;
    fragments_.push_back(validate_fragment(doc));
    return fragments_.back();
  }

  void judge(const NewsFragment& f, const std::string& participant, int origin, int veracity, int familiarity = 50,
             int trial_index = -1, Arm arm = Arm::kControl, const std::string& session = "") {
    Judgment j;
    j.judgment_id = Uuid::from_name("j" + std::to_string(judgments_.size()));
    j.fragment_id = f.fragment_id;
    j.session_id = Uuid::from_name(session.empty() ? "session|" + participant : session);
    j.participant_id = participant;
    j.origin_score = origin;
    j.veracity_score = veracity;
    j.familiarity_score = familiarity;
    j.trial_index = trial_index >= 0 ? trial_index : next_trial_[j.session_id.to_string()]++;
    j.arm = arm;
    judgments_.push_back(j);
  }

  void participant(const Json& doc) { participants_.push_back(validate_participant(doc)); }

  Dataset build() const { return Dataset(fragments_, judgments_, participants_); }

 private:
  std::vector<NewsFragment> fragments_;
  std::vector<Judgment> judgments_;
  std::vector<ParticipantProfile> participants_;
  std::map<std::string, int> next_trial_;
};

CohortSpec spec(std::uint64_t seed, int participants = 200, int trials = 40) {
  CohortSpec s;
  s.seed = seed;
  s.n_participants = participants;
  s.trials_per_participant = trials;
  return s;
}

// ---- binarize / accuracy ----

TEST(Binarize, ThresholdConvention) {
  EXPECT_EQ(binarize(73), ScoreClass::kHigh);
  EXPECT_EQ(binarize(49), ScoreClass::kLow);
  EXPECT_EQ(binarize(50), ScoreClass::kHigh);
  EXPECT_EQ(binarize(0), ScoreClass::kLow);
  EXPECT_EQ(binarize(100), ScoreClass::kHigh);
  EXPECT_EQ(binarize(60, 70), ScoreClass::kLow);
  EXPECT_EQ(code_of([] { binarize(101); }), ErrorCode::kScoreOutOfRange);
  EXPECT_EQ(code_of([] { binarize(-1); }), ErrorCode::kScoreOutOfRange);
}

TEST(Accuracy, AllCorrect) {
  Builder b;
  const NewsFragment gen = b.fragment("g", Source::kGenerated, Veracity::kFake);
  const NewsFragment hum = b.fragment("h", Source::kHuman, Veracity::kReal);
  for (int i = 0; i < 5; ++i) {
    b.judge(gen, "p1", 90, 80);
    b.judge(hum, "p1", 10, 20);
  }
  const Dataset d = b.build();
  EXPECT_DOUBLE_EQ(accuracy(d, Key::kOrigin).overall, 1.0);
  EXPECT_DOUBLE_EQ(accuracy(d, Key::kVeracity).overall, 1.0);
  EXPECT_EQ(accuracy(d, Key::kOrigin).n, 10u);
}

TEST(Accuracy, TwoGroupSplit) {
  Builder b;
  const NewsFragment f = b.fragment("g", Source::kGenerated, Veracity::kFake);
  for (int i = 0; i < 4; ++i) b.judge(f, "A", 90, 50);
  for (int i = 0; i < 6; ++i) b.judge(f, "B", 10, 50);
  b.judge(f, "C", 10, 50);
  const Dataset d = b.build();
  const AccuracyTable t = accuracy(d, Key::kOrigin, [](const Judgment& j, const NewsFragment&) {
    return j.participant_id == "C" ? std::nullopt : std::optional<std::string>(j.participant_id);
  });
  ASSERT_EQ(t.groups.size(), 2u);
  EXPECT_DOUBLE_EQ(t.groups.at("A").accuracy, 1.0);
  EXPECT_DOUBLE_EQ(t.groups.at("B").accuracy, 0.0);
  EXPECT_EQ(t.groups.at("B").n, 6u);
  EXPECT_NEAR(t.overall, 4.0 / 11.0, 1e-15);
}

TEST(Accuracy, DanglingJudgmentRejected) {
  Builder b;
  const NewsFragment f = b.fragment("g", Source::kGenerated, Veracity::kFake);
  b.judge(f, "p", 50, 50);
  Judgment orphan;
  orphan.fragment_id = Uuid::from_name("missing");
  orphan.participant_id = "p";
  std::vector<NewsFragment> fragments{f};
  EXPECT_EQ(code_of([&] { Dataset(fragments, {orphan}); }), ErrorCode::kDanglingJudgment);
}

TEST(Accuracy, OverallIsWeightedMeanOfCells) {
  const Dataset d = simulate_cohort(spec(3, 120, 40)).dataset();
  const MetricsReport r = compute_report(d);
  ASSERT_TRUE(r.accuracy_overall);
  double weighted = 0.0;
  std::uint64_t n = 0;
  for (const auto& [cell, g] : r.accuracy_by_cell) {
    weighted += g.accuracy * static_cast<double>(g.n);
    n += g.n;
  }
  EXPECT_EQ(n, r.n_judgments);
  EXPECT_LE(std::abs(weighted / static_cast<double>(n) - *r.accuracy_overall), 1e-12 * *r.accuracy_overall);
}

TEST(CellKey, GeneratedAndHuman) {
  Builder b;
  EXPECT_EQ(cell_key(b.fragment("g", Source::kGenerated, Veracity::kFake)), "mock-writer-a|0.7|tabloid|headline|en");
  EXPECT_EQ(cell_key(b.fragment("h", Source::kHuman, Veracity::kReal, "broadsheet")), "human|broadsheet|headline|en");
}

// ---- d′ ----

TEST(DPrime, SymmetricCountsGiveZero) {
  EXPECT_DOUBLE_EQ(dprime(30, 70, 30, 70).dprime, 0.0);
  EXPECT_DOUBLE_EQ(dprime(500, 500, 500, 500).dprime, 0.0);
}

TEST(DPrime, HandCheckAgainstQuantileOracle) {
  const DPrime d = dprime(841, 159, 159, 841);
  EXPECT_NEAR(d.dprime, 2.00, 0.01);
  EXPECT_NEAR(d.dprime, oracle::dprime_loglinear(841, 159, 159, 841), 1e-9);
  EXPECT_NEAR(d.criterion, 0.0, 1e-12);
}

TEST(DPrime, PerfectSeparationStaysFinite) {
  const DPrime d = dprime(10, 0, 0, 10);
  EXPECT_TRUE(std::isfinite(d.dprime));
  EXPECT_NEAR(d.dprime, 2.0 * oracle::normal_quantile(10.5 / 11.0), 1e-9);
}

TEST(DPrime, AntisymmetricUnderRoleSwap) {
  for (auto [h, m, f, c] : {std::array<int, 4>{70, 30, 20, 80}, std::array<int, 4>{5, 95, 40, 60},
                            std::array<int, 4>{12, 0, 3, 9}}) {
    EXPECT_NEAR(dprime(f, c, h, m).dprime, -dprime(h, m, f, c).dprime, 1e-12);
  }
}

TEST(DPrime, EmptyClassRejected) {
  EXPECT_EQ(code_of([] { dprime(0, 0, 5, 5); }), ErrorCode::kEmptyClass);
  EXPECT_EQ(code_of([] { dprime(5, 5, 0, 0); }), ErrorCode::kEmptyClass);
}

TEST(DPrime, SdtCountsUseHighClassAsSignal) {
  Builder b;
  const NewsFragment gen = b.fragment("g", Source::kGenerated, Veracity::kReal);
  const NewsFragment hum = b.fragment("h", Source::kHuman, Veracity::kFake);
  b.judge(gen, "p", 80, 20);  // origin hit, veracity correct rejection
  b.judge(gen, "p", 20, 80);  // origin miss, veracity false alarm
  b.judge(hum, "p", 70, 60);  // origin false alarm, veracity hit
  const Dataset d = b.build();
  const SdtCounts o = sdt_counts(d, Key::kOrigin);
  EXPECT_EQ(o.hits, 1u);
  EXPECT_EQ(o.misses, 1u);
  EXPECT_EQ(o.false_alarms, 1u);
  EXPECT_EQ(o.correct_rejections, 0u);
  const SdtCounts v = sdt_counts(d, Key::kVeracity);
  EXPECT_EQ(v.hits, 1u);
  EXPECT_EQ(v.misses, 0u);
  EXPECT_EQ(v.false_alarms, 1u);
  EXPECT_EQ(v.correct_rejections, 1u);
}

// ---- perception/accuracy gap ----

TEST(Gap, MonotoneParticipantsGiveRhoOne) {
  Builder b;
  const NewsFragment fake = b.fragment("f", Source::kGenerated, Veracity::kFake);
  const std::vector<std::vector<int>> scores = {{60, 40, 40}, {60, 60, 40}, {60, 60, 60}};
  for (std::size_t p = 0; p < scores.size(); ++p) {
    for (int s : scores[p]) b.judge(fake, "p" + std::to_string(p), 50, s);
  }
  const GapResult g = perception_accuracy_gap(b.build());
  EXPECT_DOUBLE_EQ(g.spearman_rho, 1.0);
  EXPECT_EQ(g.n, 3u);
}

TEST(Gap, IdenticalSuspicionIsDegenerate) {
  Builder b;
  const NewsFragment fake = b.fragment("f", Source::kGenerated, Veracity::kFake);
  const NewsFragment real = b.fragment("r", Source::kHuman, Veracity::kReal);
  for (int p = 0; p < 4; ++p) {
    b.judge(fake, "p" + std::to_string(p), 50, 70 - p);
    b.judge(real, "p" + std::to_string(p), 50, 30 + p);
  }
  EXPECT_EQ(code_of([&] { perception_accuracy_gap(b.build()); }), ErrorCode::kDegenerateRanks);
}

TEST(Gap, TooFewParticipants) {
  Builder b;
  const NewsFragment fake = b.fragment("f", Source::kGenerated, Veracity::kFake);
  b.judge(fake, "p0", 50, 20);
  b.judge(fake, "p1", 50, 80);
  EXPECT_EQ(code_of([&] { perception_accuracy_gap(b.build()); }), ErrorCode::kTooFewParticipants);
}

TEST(Gap, PureResponseBiasIsUncorrelatedWithSkill) {
  CohortSpec s = spec(11, 500, 40);
  s.suspicion_bias_sd = 1.0;
  EXPECT_NEAR(perception_accuracy_gap(simulate_cohort(s).dataset()).spearman_rho, 0.0, 0.05);
}

// ---- fatigue ----

TEST(Fatigue, ConstantAccuracyGivesZero) {
  Builder b;
  const NewsFragment fake = b.fragment("f", Source::kGenerated, Veracity::kFake);
  const NewsFragment real = b.fragment("r", Source::kHuman, Veracity::kReal);
  for (int p = 0; p < 3; ++p) {
    for (int t = 0; t < 10; ++t) b.judge(t % 2 ? fake : real, "p" + std::to_string(p), 50, t % 2 ? 80 : 20);
  }
  const FatigueResult f = fatigue(b.build());
  EXPECT_DOUBLE_EQ(f.delta_fake_pp, 0.0);
  EXPECT_DOUBLE_EQ(f.delta_real_pp, 0.0);
  EXPECT_DOUBLE_EQ(f.asymmetry_pp, 0.0);
}

TEST(Fatigue, HandBuiltHalves) {
  // One session of 5 trials on fake items; the middle trial is excluded.
  Builder b;
  const NewsFragment fake = b.fragment("f", Source::kGenerated, Veracity::kFake);
  const NewsFragment real = b.fragment("r", Source::kHuman, Veracity::kReal);
  for (int v : {80, 80, 10, 80, 10}) b.judge(fake, "p", 50, v);
  for (int v : {10, 10}) b.judge(real, "q", 50, v);
  const FatigueResult f = fatigue(b.build());
  EXPECT_DOUBLE_EQ(f.delta_fake_pp, -50.0);
  EXPECT_DOUBLE_EQ(f.delta_real_pp, 0.0);
  EXPECT_DOUBLE_EQ(f.asymmetry_pp, -50.0);
}

TEST(Fatigue, PlantedAsymmetricDropRecovered) {
  CohortSpec s = spec(42);
  s.fatigue_drop_fake_pp = 10.2;
  const FatigueResult f = fatigue(simulate_cohort(s).dataset());
  EXPECT_NEAR(f.delta_fake_pp, -10.2, 0.5);
  EXPECT_NEAR(f.delta_real_pp, 0.0, 0.5);
}

TEST(Fatigue, EqualDropsHaveNoAsymmetry) {
  CohortSpec s = spec(8);
  s.fatigue_drop_fake_pp = 8.0;
  s.fatigue_drop_real_pp = 8.0;
  const FatigueResult f = fatigue(simulate_cohort(s).dataset());
  EXPECT_NEAR(f.asymmetry_pp, 0.0, 0.5);
  EXPECT_NEAR(f.delta_fake_pp, -8.0, 0.5);
}

// ---- deceptive potential ----

TEST(DeceptivePotential, ExtremesAndUniform) {
  Builder b;
  const NewsFragment g = b.fragment("g", Source::kGenerated, Veracity::kFake);
  const NewsFragment h = b.fragment("h", Source::kHuman, Veracity::kReal);
  for (int i = 0; i < 10; ++i) b.judge(g, "p", 90, 50);
  b.judge(h, "p", 10, 50);
  auto dp = deceptive_potential(b.build());
  ASSERT_EQ(dp.size(), 1u);
  EXPECT_DOUBLE_EQ(dp.begin()->second, 0.0);

  Builder low;
  const NewsFragment g2 = low.fragment("g", Source::kGenerated, Veracity::kFake);
  for (int i = 0; i < 10; ++i) low.judge(g2, "p", 10, 50);
  EXPECT_DOUBLE_EQ(deceptive_potential(low.build()).begin()->second, 1.0);

  Builder uniform;
  const NewsFragment g3 = uniform.fragment("g", Source::kGenerated, Veracity::kFake);
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) uniform.judge(g3, "p", static_cast<int>(stats::uniform_index(rng, 101)), 50);
  EXPECT_NEAR(deceptive_potential(uniform.build()).begin()->second, 50.0 / 101.0, 0.03);
}

// ---- familiarity ----

TEST(Familiarity, PlantedEffectHasStablePositiveSign) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CohortSpec s = spec(seed, 100, 40);
    s.familiarity_effect = 1.0;
    EXPECT_GT(familiarity_effect(simulate_cohort(s).dataset()), 0.0) << "seed " << seed;
  }
}

TEST(Familiarity, IndependentCorrectnessNearZero) {
  CohortSpec s = spec(7, 250, 40);
  EXPECT_NEAR(familiarity_effect(simulate_cohort(s).dataset()), 0.0, 0.05);
}

TEST(Familiarity, ConstantFamiliarityIsDegenerate) {
  Builder b;
  const NewsFragment g = b.fragment("g", Source::kGenerated, Veracity::kFake);
  for (int i = 0; i < 40; ++i) b.judge(g, "p" + std::to_string(i % 4), 50, i % 3 ? 80 : 20, 33);
  EXPECT_EQ(code_of([&] { familiarity_effect(b.build()); }), ErrorCode::kDegenerateRanks);
}

TEST(Familiarity, TooFewJudgments) {
  Builder b;
  const NewsFragment g = b.fragment("g", Source::kGenerated, Veracity::kFake);
  for (int i = 0; i < 10; ++i) b.judge(g, "p", 50, i % 2 ? 80 : 20, i * 10);
  EXPECT_EQ(code_of([&] { familiarity_effect(b.build()); }), ErrorCode::kInsufficientData);
}

// ---- calibration ----

TEST(Calibration, ExtremeScoresAllCorrect) {
  Builder b;
  const NewsFragment fake = b.fragment("f", Source::kGenerated, Veracity::kFake);
  const NewsFragment real = b.fragment("r", Source::kHuman, Veracity::kReal);
  for (int i = 0; i < 20; ++i) {
    b.judge(fake, "p", 50, 100);
    b.judge(real, "p", 50, 0);
  }
  const CalibrationResult c = calibration(b.build());
  EXPECT_DOUBLE_EQ(c.ece, 0.0);
  EXPECT_EQ(c.bins.size(), kCalibrationBins);
  EXPECT_EQ(c.bins.back().n, 40u);
}

TEST(Calibration, ConfidentButCoinFlip) {
  Builder b;
  const NewsFragment fake = b.fragment("f", Source::kGenerated, Veracity::kFake);
  const NewsFragment real = b.fragment("r", Source::kHuman, Veracity::kReal);
  for (int i = 0; i < 20; ++i) {
    b.judge(fake, "p", 50, 100);
    b.judge(real, "p", 50, 100);
  }
  EXPECT_DOUBLE_EQ(calibration(b.build()).ece, 0.5);
}

TEST(Calibration, SimulatedCalibratedRespondersHaveLowEce) {
  EXPECT_LT(calibration(simulate_cohort(spec(5)).dataset()).ece, 0.05);
}

// ---- arms ----

TEST(CompareArms, PlantedBenefitRecovered) {
  CohortSpec s = spec(42);
  s.inoculation_benefit_pp = 8.0;
  EXPECT_NEAR(compare_arms(simulate_cohort(s).dataset()).delta_pp, 8.0, 1.0);
}

TEST(CompareArms, IdenticalArms) {
  const ArmComparison a = compare_arms(simulate_cohort(spec(9)).dataset());
  EXPECT_NEAR(a.delta_pp, 0.0, 1.0);
  EXPECT_NEAR(a.delta_pp, 100.0 * (a.acc_inoculation - a.acc_control), 1e-9);
}

TEST(CompareArms, MissingArm) {
  Builder b;
  const NewsFragment g = b.fragment("g", Source::kGenerated, Veracity::kFake);
  b.judge(g, "p", 50, 80);
  EXPECT_EQ(code_of([&] { compare_arms(b.build()); }), ErrorCode::kMissingArm);
}

// ---- demographics and report ----

TEST(Demographics, BandedGroupsIncludingUndisclosed) {
  Builder b;
  const NewsFragment g = b.fragment("g", Source::kGenerated, Veracity::kFake);
  b.participant(participant_doc("p1"));
  Json quiet = participant_doc("p2");
  quiet["political_orientation"] = "undisclosed";
  quiet["country"] = "undisclosed";
  b.participant(quiet);
  b.judge(g, "p1", 90, 50);
  b.judge(g, "p2", 10, 50);
  const auto groups = demographics(b.build());
  EXPECT_DOUBLE_EQ(groups.at("age_band:25-34").accuracy, 0.5);
  EXPECT_EQ(groups.at("age_band:25-34").n, 2u);
  EXPECT_DOUBLE_EQ(groups.at("country:DE").accuracy, 1.0);
  EXPECT_DOUBLE_EQ(groups.at("country:undisclosed").accuracy, 0.0);
  EXPECT_DOUBLE_EQ(groups.at("political_orientation:4").accuracy, 1.0);
  EXPECT_EQ(groups.count("political_orientation:undisclosed"), 1u);
  EXPECT_EQ(groups.count("education:master"), 1u);
}

TEST(Report, UncomputableMetricsAreNullWithWarnings) {
  Builder b;
  const NewsFragment g = b.fragment("g", Source::kGenerated, Veracity::kFake);
  b.judge(g, "p", 90, 80);
  const MetricsReport r = compute_report(b.build());
  const Json j = r;
  EXPECT_EQ(j["n_judgments"], 1);
  EXPECT_DOUBLE_EQ(j["accuracy_overall"].get<double>(), 1.0);
  EXPECT_TRUE(j["perception_accuracy_gap"].is_null());
  EXPECT_TRUE(j["arm_comparison"].is_null());
  EXPECT_TRUE(j["familiarity_rho"].is_null());
  EXPECT_TRUE(j["dprime_origin"].is_null());
  EXPECT_FALSE(r.warnings.empty());
  for (const char* key : {"n_participants", "accuracy_by_cell", "dprime_veracity", "fatigue",
                          "deceptive_potential_by_cell", "calibration", "demographics", "warnings"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(Report, FullCohortHasEveryMetric) {
  CohortSpec s = spec(42);
  s.true_dprime_origin = 0.5;
  s.fatigue_drop_fake_pp = 10.2;
  s.inoculation_benefit_pp = 8.0;
  s.familiarity_effect = 0.5;
  s.suspicion_bias_sd = 0.5;
  const MetricsReport r = compute_report(simulate_cohort(s).dataset());
  EXPECT_TRUE(r.warnings.empty()) << Json(r.warnings).dump();
  EXPECT_EQ(r.n_participants, 200u);
  EXPECT_EQ(r.n_judgments, 8000u);
  ASSERT_TRUE(r.dprime_origin && r.dprime_veracity && r.fatigue && r.arm_comparison);
  std::ostringstream csv;
  write_cell_csv(csv, r);
  EXPECT_EQ(csv.str().rfind("cell,n,accuracy\n", 0), 0u);
  std::size_t lines = 0;
  for (char c : csv.str()) lines += c == '\n';
  EXPECT_EQ(lines, r.accuracy_by_cell.size() + 1);
}

TEST(Dataset, LoadExportRoundTrip) {
  perceptionlab::testing::TempDir dir;
  const auto cohort = simulate_cohort(spec(4, 10, 8));
  auto write = [&](const std::string& name, const auto& items) {
    std::ofstream out(dir / name);
    for (const auto& x : items) out << canonical(x) << "\n";
  };
  write("fragments.jsonl", cohort.fragments);
  write("judgments.jsonl", cohort.judgments);
  write("participants.jsonl", cohort.participants);
  const Dataset d = Dataset::load_export(dir.str());
  EXPECT_EQ(d.judgments(), cohort.judgments);
  EXPECT_EQ(d.fragments(), cohort.fragments);
  EXPECT_EQ(d.participants().size(), 10u);
  EXPECT_EQ(Json(compute_report(d)).dump(), Json(compute_report(cohort.dataset())).dump());
}

// ---- simulator ----

TEST(Simulator, SameSpecAndSeedIsByteIdentical) {
  CohortSpec s = spec(77, 50, 20);
  s.suspicion_bias_sd = 0.7;
  s.fatigue_drop_fake_pp = 5;
  const auto a = simulate_cohort(s);
  const auto b = simulate_cohort(s);
  std::string da, db;
  for (const auto& j : a.judgments) da += canonical(j) + "\n";
  for (const auto& j : b.judgments) db += canonical(j) + "\n";
  EXPECT_EQ(da, db);
  s.seed = 78;
  std::string dc;
  for (const auto& j : simulate_cohort(s).judgments) dc += canonical(j) + "\n";
  EXPECT_NE(da, dc);
}

TEST(Simulator, ChanceOriginAtTenThousandTrials) {
  const Dataset d = simulate_cohort(spec(42, 250, 40)).dataset();
  EXPECT_EQ(d.judgments().size(), 10000u);
  EXPECT_NEAR(accuracy(d, Key::kOrigin).overall, 0.50, 0.02);
  EXPECT_NEAR(dprime(sdt_counts(d, Key::kOrigin)).dprime, 0.0, 0.05);
}

TEST(Simulator, PlantedDPrimeRecovered) {
  CohortSpec s = spec(42, 250, 40);
  s.true_dprime_origin = 1.0;
  const Dataset d = simulate_cohort(s).dataset();
  EXPECT_NEAR(dprime(sdt_counts(d, Key::kOrigin)).dprime, 1.0, 0.05);
  EXPECT_NEAR(dprime(sdt_counts(d, Key::kVeracity)).dprime, s.true_dprime_veracity, 0.05);
}

TEST(Simulator, BalancedPoolAndScoreRange) {
  const auto c = simulate_cohort(spec(1, 20, 40));
  EXPECT_EQ(c.fragments.size(), 40u);
  std::map<std::pair<Source, Veracity>, int> strata;
  for (const auto& f : c.fragments) ++strata[{f.source, f.veracity_label}];
  for (const auto& [k, n] : strata) EXPECT_EQ(n, 10);
  for (const auto& j : c.judgments) {
    for (int v : {j.origin_score, j.veracity_score, j.familiarity_score}) {
      ASSERT_GE(v, 0);
      ASSERT_LE(v, 100);
    }
  }
}

TEST(Simulator, InvalidSpecRejected) {
  CohortSpec s = spec(1, 10, 7);
  EXPECT_THROW(s.validate(), Error);
  EXPECT_THROW(CohortSpec::from_json(Json{{"n_participants", 0}}), Error);
  const CohortSpec parsed = CohortSpec::from_json(Json{{"seed", 5}, {"fatigue_drop_fake_pp", 10.2}});
  EXPECT_EQ(parsed.seed, 5u);
  EXPECT_DOUBLE_EQ(parsed.fatigue_drop_fake_pp, 10.2);
  EXPECT_EQ(parsed.n_participants, 200);
}

// ---- numerics ----

TEST(NormalQuantile, MatchesBisectionOracle) {
  for (double p = 0.0005; p < 1.0; p += 0.0137) {
    EXPECT_NEAR(stats::normal_quantile(p), oracle::normal_quantile(p), 1e-9) << p;
  }
  for (double p : {1e-12, 1e-8, 0.841, 0.5, 1 - 1e-9}) {
    EXPECT_NEAR(stats::normal_quantile(p), oracle::normal_quantile(p), 1e-8) << p;
  }
  EXPECT_EQ(stats::normal_quantile(0.0), -INFINITY);
  EXPECT_EQ(stats::normal_quantile(1.0), INFINITY);
  EXPECT_TRUE(std::isnan(stats::normal_quantile(1.5)));
}

TEST(Spearman, RanksAndErrors) {
  EXPECT_EQ(stats::average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  EXPECT_DOUBLE_EQ(stats::spearman({1, 2, 3, 4}, {10, 100, 1000, 10000}), 1.0);
  EXPECT_DOUBLE_EQ(stats::spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  EXPECT_EQ(code_of([] { stats::spearman({1, 1, 1}, {1, 2, 3}); }), ErrorCode::kDegenerateRanks);
  EXPECT_EQ(code_of([] { stats::spearman({1}, {1}); }), ErrorCode::kInsufficientData);
}

TEST(UniformIndex, CoversRangeWithoutBias) {
  std::mt19937_64 rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[stats::uniform_index(rng, 7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

}  // namespace
}  // namespace perceptionlab::analytics
