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

#include "deskml/workload.hpp"

#include <algorithm>
#include <cmath>

#include "deskml/hashing.hpp"

namespace deskml {

double effective_asymptote(const WorkloadProfile& profile, const Config& config) {
  double penalty = 0.0;
  for (const auto& [name, optimum] : profile.sensitivity) {
    auto it = config.find(name);
    if (it == config.end() || optimum <= 0.0) continue;
    auto v = numeric_value(it->second);
    if (!v || *v <= 0.0) continue;
    double d = std::log(*v / optimum);
    penalty += d * d;
  }
  return profile.asymptote / (1.0 + penalty);
}

double curve_value(const WorkloadProfile& profile, const Config& config, std::uint32_t step) {
  return effective_asymptote(profile, config) * (1.0 - std::exp(-profile.rate * static_cast<double>(step)));
}

std::string canonical_config(const Config& config) {
  Json j = Json::object();
  for (const auto& [k, v] : config) j[k] = v;
  return j.dump();
}

std::uint64_t run_key(const DatasetId& dataset, const ImageId& image, const Config& config) {
  std::string text = dataset;
  text.push_back('\x1f');
  text += image;
  text.push_back('\x1f');
  text += canonical_config(config);
  return fnv1a64(text);
}

double metric_value(const WorkloadProfile& profile, const Config& config, std::uint64_t seed, std::uint64_t key,
                    std::uint32_t step) {
  double v = curve_value(profile, config, step);
  if (profile.noise_sigma > 0.0) {
    CounterRng rng(mix64(seed) ^ key);
    v += profile.noise_sigma * rng.normal_at(step);
  }
  return v;
}

Bytes memory_usage(const WorkloadProfile& profile, std::uint32_t step) {
  auto ramp = std::max<std::uint32_t>(1, profile.memory_ramp_steps);
  if (step >= ramp) return profile.peak_memory;
  // Integer arithmetic keeps the exceed step exact.
  return profile.peak_memory / ramp * step + profile.peak_memory % ramp * step / ramp;
}

std::optional<std::uint32_t> oom_step(const WorkloadProfile& profile, Bytes allocation) {
  if (profile.peak_memory <= allocation) return std::nullopt;
  auto ramp = std::max<std::uint32_t>(1, profile.memory_ramp_steps);
  for (std::uint32_t s = 1; s <= std::min(ramp, profile.steps_total); ++s)
    if (memory_usage(profile, s) > allocation) return s;
  return std::nullopt;
}

double utilization_at(const WorkloadProfile& profile, std::uint32_t step) {
  if (profile.utilization.empty()) return 0.0;
  auto i = step == 0 ? 0 : (step - 1) % profile.utilization.size();
  return std::clamp(profile.utilization[i], 0.0, 100.0);
}

std::string checkpoint_digest(std::uint64_t seed, const Config& config, std::uint32_t step) {
  Json j{{"seed", seed}, {"config", Json::parse(canonical_config(config))}, {"step", step}};
  return sha256_hex(j.dump());
}

double evaluation_score(const DatasetId& dataset, MetricOrder order, const Checkpoint& checkpoint) {
  double u = CounterRng(fnv1a64(dataset + ":" + checkpoint.digest)).uniform_at(0);
  double jitter = 0.01 * (u - 0.5);
  if (order == MetricOrder::Descending) return checkpoint.curve_value + jitter;
  return std::max(0.0, 1.0 - checkpoint.curve_value + jitter);
}

Json infer_output(const std::string& digest, const Json& payload) {
  auto h = fnv1a64(digest + "|" + payload.dump());
  CounterRng rng(h);
  Json scores = Json::array();
  double total = 0.0;
  std::vector<double> raw;
  for (int i = 0; i < 4; ++i) {
    raw.push_back(0.05 + rng.uniform_at(static_cast<std::uint64_t>(i)));
    total += raw.back();
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    scores.push_back(raw[i] / total);
    if (raw[i] > raw[best]) best = i;
  }
  return Json{{"label", static_cast<int>(best)}, {"scores", scores}};
}

}  // namespace deskml
