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

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "perceptionlab/analytics.hpp"
#include "perceptionlab/hash.hpp"
#include "perceptionlab/sampler.hpp"
#include "perceptionlab/simulation.hpp"
#include "perceptionlab/storage.hpp"

namespace pl = perceptionlab;

namespace {

std::vector<pl::study::PoolEntry> pool(int per_stratum) {
  std::vector<pl::study::PoolEntry> out;
  for (int i = 0; i < per_stratum; ++i) {
    for (auto s : {pl::Source::kGenerated, pl::Source::kHuman}) {
      for (auto v : {pl::Veracity::kFake, pl::Veracity::kReal}) {
        out.push_back({pl::Uuid::from_name("bench|" + std::to_string(out.size())), s, v});
      }
    }
  }
  return out;
}

void BM_SamplerChoose(benchmark::State& state) {
  pl::study::StratifiedSampler sampler(pool(static_cast<int>(state.range(0)) / 4));
  std::vector<bool> seen(sampler.pool_size(), false);
  std::mt19937_64 rng(1);
  for (auto _ : state) {
    auto pick = sampler.choose(seen, rng);
    sampler.record_served(*pick);
    benchmark::DoNotOptimize(pick);
  }
}
BENCHMARK(BM_SamplerChoose)->Arg(40)->Arg(400)->Arg(4000);

void BM_ContentHash(benchmark::State& state) {
  const std::string text(static_cast<std::size_t>(state.range(0)), 'a');
  for (auto _ : state) benchmark::DoNotOptimize(pl::content_hash(text));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_ContentHash)->Arg(200)->Arg(8000);

void BM_SimulateCohort(benchmark::State& state) {
  pl::analytics::CohortSpec spec;
  spec.n_participants = static_cast<int>(state.range(0));
  spec.seed = 42;
  for (auto _ : state) benchmark::DoNotOptimize(pl::analytics::simulate_cohort(spec));
}
BENCHMARK(BM_SimulateCohort)->Arg(250)->Unit(benchmark::kMillisecond);

void BM_ComputeReport(benchmark::State& state) {
  pl::analytics::CohortSpec spec;
  spec.n_participants = static_cast<int>(state.range(0));
  spec.fatigue_drop_fake_pp = 10.2;
  spec.suspicion_bias_sd = 0.5;
  spec.seed = 42;
  const auto data = pl::analytics::simulate_cohort(spec).dataset();
  for (auto _ : state) benchmark::DoNotOptimize(pl::analytics::compute_report(data));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * static_cast<int64_t>(data.judgments().size()));
}
BENCHMARK(BM_ComputeReport)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_StorageInsert(benchmark::State& state) {
  const auto dir = std::filesystem::temp_directory_path() / ("perceptionlab-bench-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  {
    pl::storage::JsonlStore store(dir, {state.range(0) != 0});
    std::uint64_t i = 0;
    for (auto _ : state) {
      pl::Json doc = {{"participant_id", "p-" + std::to_string(i++)}, {"age_band", "25-34"},
                      {"education", "master"}, {"political_orientation", 4}, {"country", "DE"},
                      {"ui_language", "en"}, {"consent", true}, {"created_at", "2026-01-01T00:00:00.000Z"}};
      store.insert(pl::storage::Collection::kParticipants, doc);
    }
  }
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_StorageInsert)->ArgName("fsync")->Arg(0)->Arg(1);

}  // namespace
BENCHMARK_MAIN();
