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

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "perceptionlab/domain.hpp"

namespace perceptionlab::analytics {

inline constexpr int kDefaultThreshold = 50;
inline constexpr std::size_t kCalibrationBins = 10;
inline constexpr std::size_t kMinFamiliarityJudgments = 30;
inline constexpr std::size_t kMinGapParticipants = 3;

enum class ScoreClass { kLow, kHigh };

/// score >= threshold is high (machine-generated / fake).
ScoreClass binarize(int score, int threshold = kDefaultThreshold);

/// Which judged dimension a metric scores.
enum class Key { kVeracity, kOrigin };
std::string_view to_string(Key key);

/// Judgments joined to fragments (and optionally participants). Building it
/// throws DanglingJudgment for a judgment whose fragment is absent.
class Dataset {
 public:
  Dataset(std::vector<NewsFragment> fragments, std::vector<Judgment> judgments,
          std::vector<ParticipantProfile> participants = {});

  /// Loads fragments.jsonl, judgments.jsonl and, when present,
  /// participants.jsonl from an export directory.
  static Dataset load_export(const std::string& directory);

  const std::vector<NewsFragment>& fragments() const { return fragments_; }
  const std::vector<Judgment>& judgments() const { return judgments_; }
  const std::vector<ParticipantProfile>& participants() const { return participants_; }

  /// Fragment joined to judgments()[index].
  const NewsFragment& fragment_for(std::size_t index) const { return fragments_[judgment_fragment_[index]]; }
  const ParticipantProfile* participant(const std::string& participant_id) const;

 private:
  std::vector<NewsFragment> fragments_;
  std::vector<Judgment> judgments_;
  std::vector<ParticipantProfile> participants_;
  std::vector<std::size_t> judgment_fragment_;
  std::unordered_map<std::string, std::size_t> participant_index_;
};

bool is_correct(const Judgment& judgment, const NewsFragment& fragment, Key key, int threshold = kDefaultThreshold);

/// Generated fragments: "model|temperature|style|format|language".
/// Human fragments: "human|style|format|language".
std::string cell_key(const NewsFragment& fragment);

struct GroupAccuracy {
  double accuracy = 0.0;
  std::uint64_t n = 0;
};

struct AccuracyTable {
  double overall = 0.0;
  std::uint64_t n = 0;
  std::map<std::string, GroupAccuracy> groups;
};

/// Returns the group name for a judgment, or nullopt to exclude it from the
/// per-group table (it still counts toward the overall rate).
using GroupFn = std::function<std::optional<std::string>(const Judgment&, const NewsFragment&)>;

AccuracyTable accuracy(const Dataset& data, Key key, const GroupFn& group_by = {});

struct SdtCounts {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t false_alarms = 0;
  std::uint64_t correct_rejections = 0;
};

struct DPrime {
  double dprime = 0.0;
  double criterion = 0.0;
};

/// Signal is the high class: generated text for origin, fake for veracity.
SdtCounts sdt_counts(const Dataset& data, Key key);
DPrime dprime(const SdtCounts& counts);
DPrime dprime(std::uint64_t hits, std::uint64_t misses, std::uint64_t false_alarms, std::uint64_t correct_rejections);

struct GapResult {
  double spearman_rho = 0.0;
  std::uint64_t n = 0;
};

/// Spearman between per-participant mean veracity score and veracity accuracy.
GapResult perception_accuracy_gap(const Dataset& data);

struct FatigueResult {
  double delta_fake_pp = 0.0;
  double delta_real_pp = 0.0;
  double asymmetry_pp = 0.0;
};

/// Veracity accuracy on the second half of each session minus the first
/// half, pooled over sessions, per fragment class. For an odd-length session
/// the middle trial belongs to neither half.
FatigueResult fatigue(const Dataset& data);

/// Fraction of judgments on generated fragments with origin_score < 50, per cell.
std::map<std::string, double> deceptive_potential(const Dataset& data);

/// Spearman between familiarity_score and per-judgment correctness.
double familiarity_effect(const Dataset& data, Key key = Key::kVeracity);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::uint64_t n = 0;
  double accuracy = 0.0;
  double mean_confidence = 0.0;  // mapped: 0.5 + 0.5 * |score - 50| / 50
};

struct CalibrationResult {
  double ece = 0.0;
  std::vector<CalibrationBin> bins;
};

CalibrationResult calibration(const Dataset& data, Key key = Key::kVeracity);

struct ArmComparison {
  double acc_control = 0.0;
  double acc_inoculation = 0.0;
  double delta_pp = 0.0;
};

ArmComparison compare_arms(const Dataset& data);

/// Origin accuracy per banded demographic ("age_band:25-34", "education:master",
/// "political_orientation:4", "country:DE"; undisclosed values form their own group).
std::map<std::string, GroupAccuracy> demographics(const Dataset& data);

/// Every metric at once. A metric that cannot be computed is null in JSON and
/// the reason is listed under warnings.
struct MetricsReport {
  std::uint64_t n_participants = 0;
  std::uint64_t n_judgments = 0;
  std::optional<double> accuracy_overall;           // origin
  std::optional<double> accuracy_veracity_overall;  // veracity
  std::map<std::string, GroupAccuracy> accuracy_by_cell;
  std::optional<DPrime> dprime_origin;
  std::optional<DPrime> dprime_veracity;
  std::optional<GapResult> perception_accuracy_gap;
  std::optional<FatigueResult> fatigue;
  std::optional<double> familiarity_rho;
  std::map<std::string, double> deceptive_potential_by_cell;
  std::optional<CalibrationResult> calibration;
  std::optional<ArmComparison> arm_comparison;
  std::map<std::string, GroupAccuracy> demographics;
  std::vector<std::string> warnings;
};

MetricsReport compute_report(const Dataset& data);

void to_json(Json& j, const DPrime& v);
void to_json(Json& j, const GapResult& v);
void to_json(Json& j, const FatigueResult& v);
void to_json(Json& j, const CalibrationBin& v);
void to_json(Json& j, const CalibrationResult& v);
void to_json(Json& j, const ArmComparison& v);
void to_json(Json& j, const MetricsReport& v);

/// cell,n,accuracy rows for accuracy_by_cell.
void write_cell_csv(std::ostream& out, const MetricsReport& report);

}  // namespace perceptionlab::analytics
