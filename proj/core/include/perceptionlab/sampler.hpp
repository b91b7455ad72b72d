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

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

#include "perceptionlab/domain.hpp"

namespace perceptionlab::study {

struct PoolEntry {
  Uuid fragment_id;
  Source source = Source::kGenerated;
  Veracity veracity = Veracity::kReal;
};

/// Stratum of one fragment: source x veracity label.
enum class Stratum { kGeneratedFake, kGeneratedReal, kHumanFake, kHumanReal };
inline constexpr std::size_t kStrataCount = 4;
Stratum stratum_of(Source source, Veracity veracity);
std::string_view to_string(Stratum s);

struct SamplerCounts {
  std::vector<std::uint64_t> per_fragment;  // aligned with the pool
  std::array<std::uint64_t, kStrataCount> per_stratum{};
  std::uint64_t generated = 0;
  std::uint64_t human = 0;
  std::uint64_t fake = 0;
  std::uint64_t real = 0;

  bool operator==(const SamplerCounts&) const = default;
};

/// Least-served-first stratified selection over a fixed fragment pool.
///
/// A pick first chooses the stratum whose source and veracity marginals are
/// jointly least served (sum of the two marginal counts, then the stratum's
/// own count), then the least-served eligible fragment inside it. Remaining
/// ties are broken uniformly with the caller's rng. Alternating picks between
/// opposite strata keeps both marginals within one of each other whenever the
/// pool allows it.
///
/// Not thread-safe; the study service serializes access.
class StratifiedSampler {
 public:
  explicit StratifiedSampler(std::vector<PoolEntry> pool);

  std::size_t pool_size() const { return pool_.size(); }
  const PoolEntry& entry(std::size_t index) const { return pool_[index]; }
  std::optional<std::size_t> index_of(const Uuid& fragment_id) const;

  /// Index of the next fragment among those with `seen[i] == false`, or
  /// nullopt when none is eligible. `seen` must have pool_size() entries.
  std::optional<std::size_t> choose(const std::vector<bool>& seen, std::mt19937_64& rng) const;

  void record_served(std::size_t index);
  /// Reverts a record_served whose presentation could not be persisted.
  void unrecord_served(std::size_t index);

  const SamplerCounts& counts() const { return counts_; }

 private:
  std::vector<PoolEntry> pool_;
  std::unordered_map<std::string, std::size_t> index_;
  SamplerCounts counts_;
};

/// Seed of a session's tie-breaking rng; per-trial streams are derived from
/// it so replays after a restart draw identically.
std::uint64_t session_seed(std::uint64_t campaign_seed, const Uuid& session_id);
std::mt19937_64 trial_rng(std::uint64_t session_seed, int trial_index);

}  // namespace perceptionlab::study
