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

#include "perceptionlab/analytics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <set>

#include "perceptionlab/stats.hpp"
#include "perceptionlab/storage.hpp"

namespace perceptionlab::analytics {
namespace {

std::string shortest(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double rate(std::uint64_t num, std::uint64_t den) { return static_cast<double>(num) / static_cast<double>(den); }

bool signal_class(const NewsFragment& f, Key key) {
  return key == Key::kOrigin ? f.source == Source::kGenerated : f.veracity_label == Veracity::kFake;
}

int score_of(const Judgment& j, Key key) { return key == Key::kOrigin ? j.origin_score : j.veracity_score; }

std::string metric_warning(std::string_view metric, const Error& e) {
  return std::string(metric) + ": " + std::string(to_string(e.code())) + ": " + e.what();
}

Json nullable(const auto& opt) { return opt ? Json(*opt) : Json(nullptr); }

Json group_table(const std::map<std::string, GroupAccuracy>& groups) {
  Json out = Json::object();
  for (const auto& [name, g] : groups) out[name] = g.accuracy;
  return out;
}

}  // namespace

ScoreClass binarize(int score, int threshold) {
  if (score < kMinScore || score > kMaxScore) {
    throw Error(ErrorCode::kScoreOutOfRange, "score " + std::to_string(score) + " outside 0..100");
  }
  return score >= threshold ? ScoreClass::kHigh : ScoreClass::kLow;
}

std::string_view to_string(Key key) { return key == Key::kOrigin ? "origin" : "veracity"; }

Dataset::Dataset(std::vector<NewsFragment> fragments, std::vector<Judgment> judgments,
                 std::vector<ParticipantProfile> participants)
    : fragments_(std::move(fragments)), judgments_(std::move(judgments)), participants_(std::move(participants)) {
  std::unordered_map<std::string, std::size_t> by_id;
  by_id.reserve(fragments_.size());
  for (std::size_t i = 0; i < fragments_.size(); ++i) by_id.emplace(fragments_[i].fragment_id.to_string(), i);
  judgment_fragment_.reserve(judgments_.size());
  for (const Judgment& j : judgments_) {
    auto it = by_id.find(j.fragment_id.to_string());
    if (it == by_id.end()) {
      throw Error(ErrorCode::kDanglingJudgment, "judgment " + j.judgment_id.to_string() + " references unknown fragment",
                  {{ErrorCode::kDanglingJudgment, j.fragment_id.to_string(), "fragment not found"}});
    }
    judgment_fragment_.push_back(it->second);
  }
  for (std::size_t i = 0; i < participants_.size(); ++i) participant_index_.emplace(participants_[i].participant_id, i);
}

Dataset Dataset::load_export(const std::string& directory) {
  const std::filesystem::path dir(directory);
  auto load = [&](const char* name, bool required) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) {
      if (required) throw Error(ErrorCode::kMissingField, "export has no " + path.string());
      return std::vector<Json>{};
    }
    return storage::read_jsonl(path);
  };
  std::vector<NewsFragment> fragments;
  for (const Json& doc : load("fragments.jsonl", true)) fragments.push_back(validate_fragment(doc));
  std::vector<Judgment> judgments;
  for (const Json& doc : load("judgments.jsonl", true)) judgments.push_back(parse_judgment(doc));
  std::vector<ParticipantProfile> participants;
  for (const Json& doc : load("participants.jsonl", false)) participants.push_back(validate_participant(doc));
  return Dataset(std::move(fragments), std::move(judgments), std::move(participants));
}

const ParticipantProfile* Dataset::participant(const std::string& participant_id) const {
  auto it = participant_index_.find(participant_id);
  return it == participant_index_.end() ? nullptr : &participants_[it->second];
}

bool is_correct(const Judgment& judgment, const NewsFragment& fragment, Key key, int threshold) {
  const bool judged_high = binarize(score_of(judgment, key), threshold) == ScoreClass::kHigh;
  return judged_high == signal_class(fragment, key);
}

std::string cell_key(const NewsFragment& f) {
  const std::string tail = f.style + "|" + f.format + "|" + f.language;
  if (f.source == Source::kHuman) return "human|" + tail;
  return f.model.value_or("") + "|" + (f.temperature ? shortest(*f.temperature) : std::string()) + "|" + tail;
}

AccuracyTable accuracy(const Dataset& data, Key key, const GroupFn& group_by) {
  const auto& judgments = data.judgments();
  if (judgments.empty()) throw Error(ErrorCode::kInsufficientData, "no judgments");
  AccuracyTable table;
  std::uint64_t correct = 0;
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> groups;  // correct, n
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    const NewsFragment& f = data.fragment_for(i);
    const bool ok = is_correct(judgments[i], f, key);
    correct += ok;
    if (group_by) {
      if (auto g = group_by(judgments[i], f)) {
        auto& slot = groups[*g];
        slot.first += ok;
        ++slot.second;
      }
    }
  }
  table.n = judgments.size();
  table.overall = rate(correct, table.n);
  for (const auto& [name, counts] : groups) table.groups[name] = {rate(counts.first, counts.second), counts.second};
  return table;
}

SdtCounts sdt_counts(const Dataset& data, Key key) {
  SdtCounts c;
  const auto& judgments = data.judgments();
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    const bool signal = signal_class(data.fragment_for(i), key);
    const bool high = binarize(score_of(judgments[i], key)) == ScoreClass::kHigh;
    if (signal) {
      ++(high ? c.hits : c.misses);
    } else {
      ++(high ? c.false_alarms : c.correct_rejections);
    }
  }
  return c;
}

DPrime dprime(std::uint64_t hits, std::uint64_t misses, std::uint64_t false_alarms, std::uint64_t correct_rejections) {
  if (hits + misses == 0) throw Error(ErrorCode::kEmptyClass, "no signal trials (hits + misses = 0)");
  if (false_alarms + correct_rejections == 0) {
    throw Error(ErrorCode::kEmptyClass, "no noise trials (false_alarms + correct_rejections = 0)");
  }
  const double h = (static_cast<double>(hits) + 0.5) / (static_cast<double>(hits + misses) + 1.0);
  const double f = (static_cast<double>(false_alarms) + 0.5) / (static_cast<double>(false_alarms + correct_rejections) + 1.0);
  const double zh = stats::normal_quantile(h);
  const double zf = stats::normal_quantile(f);
  return {zh - zf, -(zh + zf) / 2.0};
}

DPrime dprime(const SdtCounts& c) { return dprime(c.hits, c.misses, c.false_alarms, c.correct_rejections); }

GapResult perception_accuracy_gap(const Dataset& data) {
  struct Acc {
    double suspicion_sum = 0;
    std::uint64_t correct = 0;
    std::uint64_t n = 0;
  };
  std::map<std::string, Acc> per;
  const auto& judgments = data.judgments();
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    Acc& a = per[judgments[i].participant_id];
    a.suspicion_sum += judgments[i].veracity_score;
    a.correct += is_correct(judgments[i], data.fragment_for(i), Key::kVeracity);
    ++a.n;
  }
  if (per.size() < kMinGapParticipants) {
    throw Error(ErrorCode::kTooFewParticipants,
                "perception-accuracy gap needs at least 3 participants, got " + std::to_string(per.size()));
  }
  std::vector<double> suspicion, acc;
  for (const auto& [id, a] : per) {
    suspicion.push_back(a.suspicion_sum / static_cast<double>(a.n));
    acc.push_back(rate(a.correct, a.n));
  }
  return {stats::spearman(suspicion, acc), per.size()};
}

FatigueResult fatigue(const Dataset& data) {
  std::map<std::string, std::vector<std::size_t>> sessions;
  const auto& judgments = data.judgments();
  for (std::size_t i = 0; i < judgments.size(); ++i) sessions[judgments[i].session_id.to_string()].push_back(i);

  // [class][half] -> correct, n ; class 0 = fake, 1 = real
  std::array<std::array<std::array<std::uint64_t, 2>, 2>, 2> t{};
  for (auto& [id, idx] : sessions) {
    if (idx.size() < 2) continue;
    std::sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) {
      return judgments[l].trial_index < judgments[r].trial_index;
    });
    const std::size_t n = idx.size();
    const std::size_t half = n / 2;
    for (std::size_t k = 0; k < n; ++k) {
      int h;
      if (k < half) {
        h = 0;
      } else if (k >= n - half) {
        h = 1;
      } else {
        continue;
      }
      const NewsFragment& f = data.fragment_for(idx[k]);
      const int cls = f.veracity_label == Veracity::kFake ? 0 : 1;
      t[cls][h][0] += is_correct(judgments[idx[k]], f, Key::kVeracity);
      ++t[cls][h][1];
    }
  }
  auto delta = [&](int cls, ErrorCode code, const char* what) {
    if (t[cls][0][1] == 0 || t[cls][1][1] == 0) {
      throw Error(code, std::string("fatigue needs ") + what + " trials in both session halves");
    }
    return 100.0 * (rate(t[cls][1][0], t[cls][1][1]) - rate(t[cls][0][0], t[cls][0][1]));
  };
  FatigueResult r;
  r.delta_fake_pp = delta(0, ErrorCode::kNoFakeTrials, "fake");
  r.delta_real_pp = delta(1, ErrorCode::kNoRealTrials, "real");
  r.asymmetry_pp = r.delta_fake_pp - r.delta_real_pp;
  return r;
}

std::map<std::string, double> deceptive_potential(const Dataset& data) {
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> cells;  // judged human, n
  const auto& judgments = data.judgments();
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    const NewsFragment& f = data.fragment_for(i);
    if (f.source != Source::kGenerated) continue;
    auto& c = cells[cell_key(f)];
    c.first += judgments[i].origin_score < kDefaultThreshold;
    ++c.second;
  }
  std::map<std::string, double> out;
  for (const auto& [cell, c] : cells) out[cell] = rate(c.first, c.second);
  return out;
}

double familiarity_effect(const Dataset& data, Key key) {
  const auto& judgments = data.judgments();
  if (judgments.size() < kMinFamiliarityJudgments) {
    throw Error(ErrorCode::kInsufficientData,
                "familiarity effect needs at least 30 judgments, got " + std::to_string(judgments.size()));
  }
  std::vector<double> familiarity, correct;
  familiarity.reserve(judgments.size());
  correct.reserve(judgments.size());
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    familiarity.push_back(judgments[i].familiarity_score);
    correct.push_back(is_correct(judgments[i], data.fragment_for(i), key) ? 1.0 : 0.0);
  }
  return stats::spearman(familiarity, correct);
}

CalibrationResult calibration(const Dataset& data, Key key) {
  const auto& judgments = data.judgments();
  if (judgments.empty()) throw Error(ErrorCode::kInsufficientData, "calibration needs at least one judgment");
  std::array<std::uint64_t, kCalibrationBins> n{}, correct{};
  std::array<double, kCalibrationBins> conf_sum{};
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    const int score = score_of(judgments[i], key);
    const double confidence = std::abs(score - 50) / 50.0;
    const auto bin = std::min<std::size_t>(kCalibrationBins - 1, static_cast<std::size_t>(confidence * kCalibrationBins));
    ++n[bin];
    correct[bin] += is_correct(judgments[i], data.fragment_for(i), key);
    conf_sum[bin] += 0.5 + 0.5 * confidence;
  }
  CalibrationResult r;
  const double total = static_cast<double>(judgments.size());
  for (std::size_t b = 0; b < kCalibrationBins; ++b) {
    CalibrationBin bin;
    bin.lower = static_cast<double>(b) / kCalibrationBins;
    bin.upper = static_cast<double>(b + 1) / kCalibrationBins;
    bin.n = n[b];
    if (n[b] > 0) {
      bin.accuracy = rate(correct[b], n[b]);
      bin.mean_confidence = conf_sum[b] / static_cast<double>(n[b]);
      r.ece += static_cast<double>(n[b]) / total * std::abs(bin.accuracy - bin.mean_confidence);
    }
    r.bins.push_back(bin);
  }
  return r;
}

ArmComparison compare_arms(const Dataset& data) {
  std::array<std::uint64_t, 2> n{}, correct{};
  const auto& judgments = data.judgments();
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    const int arm = judgments[i].arm == Arm::kInoculation ? 1 : 0;
    ++n[arm];
    correct[arm] += is_correct(judgments[i], data.fragment_for(i), Key::kVeracity);
  }
  if (n[0] == 0) throw Error(ErrorCode::kMissingArm, "no judgments in the control arm");
  if (n[1] == 0) throw Error(ErrorCode::kMissingArm, "no judgments in the inoculation arm");
  ArmComparison r;
  r.acc_control = rate(correct[0], n[0]);
  r.acc_inoculation = rate(correct[1], n[1]);
  r.delta_pp = 100.0 * (r.acc_inoculation - r.acc_control);
  return r;
}

std::map<std::string, GroupAccuracy> demographics(const Dataset& data) {
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> groups;
  const auto& judgments = data.judgments();
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    const ParticipantProfile* p = data.participant(judgments[i].participant_id);
    if (!p) continue;
    const bool ok = is_correct(judgments[i], data.fragment_for(i), Key::kOrigin);
    const std::string keys[] = {
        "age_band:" + std::string(to_string(p->age_band)),
        "education:" + std::string(to_string(p->education)),
        "political_orientation:" +
            (p->political_orientation ? std::to_string(*p->political_orientation) : std::string("undisclosed")),
        "country:" + p->country.value_or("undisclosed"),
    };
    for (const auto& k : keys) {
      groups[k].first += ok;
      ++groups[k].second;
    }
  }
  std::map<std::string, GroupAccuracy> out;
  for (const auto& [k, c] : groups) out[k] = {rate(c.first, c.second), c.second};
  return out;
}

MetricsReport compute_report(const Dataset& data) {
  MetricsReport r;
  r.n_judgments = data.judgments().size();
  std::set<std::string> participants;
  for (const Judgment& j : data.judgments()) participants.insert(j.participant_id);
  r.n_participants = participants.size();

  auto attempt = [&](std::string_view metric, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      r.warnings.push_back(metric_warning(metric, e));
    }
  };
  attempt("accuracy_overall", [&] {
    const AccuracyTable t =
        accuracy(data, Key::kOrigin, [](const Judgment&, const NewsFragment& f) { return cell_key(f); });
    r.accuracy_overall = t.overall;
    r.accuracy_by_cell = t.groups;
  });
  attempt("accuracy_veracity_overall", [&] { r.accuracy_veracity_overall = accuracy(data, Key::kVeracity).overall; });
  attempt("dprime_origin", [&] { r.dprime_origin = dprime(sdt_counts(data, Key::kOrigin)); });
  attempt("dprime_veracity", [&] { r.dprime_veracity = dprime(sdt_counts(data, Key::kVeracity)); });
  attempt("perception_accuracy_gap", [&] { r.perception_accuracy_gap = perception_accuracy_gap(data); });
  attempt("fatigue", [&] { r.fatigue = fatigue(data); });
  attempt("familiarity_rho", [&] { r.familiarity_rho = familiarity_effect(data); });
  r.deceptive_potential_by_cell = deceptive_potential(data);
  attempt("calibration", [&] { r.calibration = calibration(data); });
  attempt("arm_comparison", [&] { r.arm_comparison = compare_arms(data); });
  r.demographics = demographics(data);
  return r;
}

void to_json(Json& j, const DPrime& v) { j = Json{{"dprime", v.dprime}, {"criterion", v.criterion}}; }
void to_json(Json& j, const GapResult& v) { j = Json{{"spearman_rho", v.spearman_rho}, {"n", v.n}}; }
void to_json(Json& j, const FatigueResult& v) {
  j = Json{{"delta_fake_pp", v.delta_fake_pp}, {"delta_real_pp", v.delta_real_pp}, {"asymmetry_pp", v.asymmetry_pp}};
}
void to_json(Json& j, const CalibrationBin& v) {
  j = Json{{"lower", v.lower}, {"upper", v.upper}, {"n", v.n}, {"accuracy", v.accuracy}, {"mean_confidence", v.mean_confidence}};
}
void to_json(Json& j, const CalibrationResult& v) { j = Json{{"ece", v.ece}, {"bins", v.bins}}; }
void to_json(Json& j, const ArmComparison& v) {
  j = Json{{"acc_control", v.acc_control}, {"acc_inoculation", v.acc_inoculation}, {"delta_pp", v.delta_pp}};
}

void to_json(Json& j, const MetricsReport& v) {
  j = Json{
      {"n_participants", v.n_participants},
      {"n_judgments", v.n_judgments},
      {"accuracy_overall", nullable(v.accuracy_overall)},
      {"accuracy_veracity_overall", nullable(v.accuracy_veracity_overall)},
      {"accuracy_by_cell", group_table(v.accuracy_by_cell)},
      {"dprime_origin", nullable(v.dprime_origin)},
      {"dprime_veracity", nullable(v.dprime_veracity)},
      {"perception_accuracy_gap", nullable(v.perception_accuracy_gap)},
      {"fatigue", nullable(v.fatigue)},
      {"familiarity_rho", nullable(v.familiarity_rho)},
      {"deceptive_potential_by_cell", v.deceptive_potential_by_cell},
      {"calibration", nullable(v.calibration)},
      {"arm_comparison", nullable(v.arm_comparison)},
      {"demographics", group_table(v.demographics)},
      {"warnings", v.warnings},
  };
}

void write_cell_csv(std::ostream& out, const MetricsReport& report) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  out << "cell,n,accuracy\n";
  for (const auto& [cell, g] : report.accuracy_by_cell) out << quote(cell) << ',' << g.n << ',' << shortest(g.accuracy) << '\n';
}

}  // namespace perceptionlab::analytics
