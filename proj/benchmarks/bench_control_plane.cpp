// Copyright 2026 The deskml Authors.
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

#include "deskml/control_state.hpp"
#include "deskml/event_log.hpp"
#include "deskml/placement.hpp"
#include "deskml/telemetry.hpp"

namespace deskml {
namespace {

std::vector<NodeDescriptor> fleet(std::size_t n, std::mt19937_64& rng) {
  std::vector<NodeDescriptor> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    NodeDescriptor d;
    d.node_id = "node-" + std::to_string(i);
    d.total_gpus = 8;
    d.available_gpus = static_cast<std::uint32_t>(rng() % 9);
    d.total_memory = 256 * kGiB;
    d.available_memory = d.available_gpus * 32 * kGiB;
    if (rng() % 3 == 0) d.cached_datasets.insert("ds");
    nodes.push_back(std::move(d));
  }
  return nodes;
}

void BM_Place(benchmark::State& state) {
  std::mt19937_64 rng(1);
  auto nodes = fleet(static_cast<std::size_t>(state.range(0)), rng);
  ResourceRequest r{2, 16 * kGiB, "ds", "base"};
  for (auto _ : state) benchmark::DoNotOptimize(place(r, nodes));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Place)->RangeMultiplier(4)->Range(4, 1024);

Json node_payload() { return Json{{"op", "register"}, {"total_gpus", 8}, {"total_memory", kGiB}}; }

LogRecord node_record(Seq seq) {
  return LogRecord{seq, rec::kNode, "n" + std::to_string(seq), static_cast<Timestamp>(seq), node_payload()};
}

void BM_LogAppendMemory(benchmark::State& state) {
  EventLog log;
  std::uint64_t seq = 0;
  for (auto _ : state) {
    ++seq;
    log.append(rec::kNode, "n" + std::to_string(seq), static_cast<Timestamp>(seq), node_payload());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LogAppendMemory);

void BM_LogAppendFile(benchmark::State& state) {
  auto path = std::filesystem::temp_directory_path() / "deskml-bench.log";
  std::filesystem::remove(path);
  {
    EventLog log(path);
    std::uint64_t seq = 0;
    for (auto _ : state) {
    ++seq;
    log.append(rec::kNode, "n" + std::to_string(seq), static_cast<Timestamp>(seq), node_payload());
  }
    state.SetItemsProcessed(state.iterations());
  }
  std::filesystem::remove(path);
}
BENCHMARK(BM_LogAppendFile);

void BM_Rebuild(benchmark::State& state) {
  std::vector<LogRecord> records;
  for (Seq s = 1; s <= static_cast<Seq>(state.range(0)); ++s) records.push_back(node_record(s));
  for (auto _ : state) benchmark::DoNotOptimize(rebuild(records).applied_seq);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Rebuild)->Arg(1000)->Arg(10000);

void BM_Aggregate(benchmark::State& state) {
  std::vector<TelemetrySample> samples;
  for (Timestamp t = 0; t < 60'000; t += 1000)
    for (std::uint32_t g = 0; g < static_cast<std::uint32_t>(state.range(0)); ++g)
      samples.push_back(TelemetrySample{"node-" + std::to_string(g / 8), g % 8, 75.0 + g % 20, kGiB,
                                        g % 3 ? std::optional<SessionId>("u/d/1") : std::nullopt, t});
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_utilization(samples).running_ratio);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples.size()));
}
BENCHMARK(BM_Aggregate)->Arg(32)->Arg(256);

}  // namespace
}  // namespace deskml

BENCHMARK_MAIN();
