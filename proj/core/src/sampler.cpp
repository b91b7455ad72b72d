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

#include "perceptionlab/sampler.hpp"

#include <limits>

#include "perceptionlab/hash.hpp"
#include "perceptionlab/stats.hpp"

namespace perceptionlab::study {

Stratum stratum_of(Source source, Veracity veracity) {
  if (source == Source::kGenerated) return veracity == Veracity::kFake ? Stratum::kGeneratedFake : Stratum::kGeneratedReal;
  return veracity == Veracity::kFake ? Stratum::kHumanFake : Stratum::kHumanReal;
}

std::string_view to_string(Stratum s) {
  switch (s) {
    case Stratum::kGeneratedFake: return "generated/fake";
    case Stratum::kGeneratedReal: return "generated/real";
    case Stratum::kHumanFake: return "human/fake";
    case Stratum::kHumanReal: return "human/real";
  }
  return "";
}

StratifiedSampler::StratifiedSampler(std::vector<PoolEntry> pool) : pool_(std::move(pool)) {
  counts_.per_fragment.assign(pool_.size(), 0);
  for (std::size_t i = 0; i < pool_.size(); ++i) index_.emplace(pool_[i].fragment_id.to_string(), i);
}

std::optional<std::size_t> StratifiedSampler::index_of(const Uuid& fragment_id) const {
  auto it = index_.find(fragment_id.to_string());
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> StratifiedSampler::choose(const std::vector<bool>& seen, std::mt19937_64& rng) const {
  std::array<std::uint64_t, kStrataCount> unseen{};
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (!seen[i]) ++unseen[static_cast<std::size_t>(stratum_of(pool_[i].source, pool_[i].veracity))];
  }

  // Lower is better: global marginal load, then session slack, then per-stratum load.
  // The complement stratum (opposite source and veracity) is what restores both
  // marginals on the next trial, so keep it available to this session.
  using Key = std::array<std::uint64_t, 5>;
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::size_t> best_strata;
  Key best{kMax, kMax, kMax, kMax, kMax};
  for (std::size_t s = 0; s < kStrataCount; ++s) {
    if (unseen[s] == 0) continue;
    const bool generated = s <= 1;
    const bool fake = s % 2 == 0;
    const std::size_t complement = kStrataCount - 1 - s;
    const Key key{(generated ? counts_.generated : counts_.human) + (fake ? counts_.fake : counts_.real),
                  unseen[complement] > 0 ? 0u : 1u, kMax - (unseen[s] + unseen[complement]), kMax - unseen[s],
                  counts_.per_stratum[s]};
    if (key < best) {
      best = key;
      best_strata.assign(1, s);
    } else if (key == best) {
      best_strata.push_back(s);
    }
  }
  if (best_strata.empty()) return std::nullopt;
  const std::size_t stratum =
      best_strata[stats::uniform_index(rng, best_strata.size())];

  std::vector<std::size_t> candidates;
  std::uint64_t least = std::numeric_limits<std::uint64_t>::max();
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (seen[i] || static_cast<std::size_t>(stratum_of(pool_[i].source, pool_[i].veracity)) != stratum) continue;
    const std::uint64_t c = counts_.per_fragment[i];
    if (c < least) {
      least = c;
      candidates.assign(1, i);
    } else if (c == least) {
      candidates.push_back(i);
    }
  }
  return candidates[stats::uniform_index(rng, candidates.size())];
}

void StratifiedSampler::record_served(std::size_t index) {
  const PoolEntry& e = pool_.at(index);
  ++counts_.per_fragment[index];
  ++counts_.per_stratum[static_cast<std::size_t>(stratum_of(e.source, e.veracity))];
  ++(e.source == Source::kGenerated ? counts_.generated : counts_.human);
  ++(e.veracity == Veracity::kFake ? counts_.fake : counts_.real);
}

void StratifiedSampler::unrecord_served(std::size_t index) {
  const PoolEntry& e = pool_.at(index);
  if (counts_.per_fragment[index] == 0) return;
  --counts_.per_fragment[index];
  --counts_.per_stratum[static_cast<std::size_t>(stratum_of(e.source, e.veracity))];
  --(e.source == Source::kGenerated ? counts_.generated : counts_.human);
  --(e.veracity == Veracity::kFake ? counts_.fake : counts_.real);
}

std::uint64_t session_seed(std::uint64_t campaign_seed, const Uuid& session_id) {
  return sha256_prefix_u64(std::to_string(campaign_seed) + "|" + session_id.to_string());
}

std::mt19937_64 trial_rng(std::uint64_t seed, int trial_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial_index)};
  return std::mt19937_64(seq);
}

}  // namespace perceptionlab::study
