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
#include <random>
#include <vector>

namespace perceptionlab::stats {

double normal_cdf(double x);

/// Inverse of normal_cdf on (0, 1). Returns ±infinity at the endpoints.
double normal_quantile(double p);

/// Ranks 1..n with ties assigned their average rank.
std::vector<double> average_ranks(const std::vector<double>& values);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Spearman rank correlation (Pearson on average ranks). Throws
/// DegenerateRanks when either side has zero rank variance, and
/// InsufficientData for fewer than two pairs.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

}  // namespace perceptionlab::stats
