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

#pragma once

#include "deskml/types.hpp"

namespace deskml {

// Synthetic training job. Everything here is a pure function of its inputs,
// which is what makes runs, forks and resumes reproducible.

/// A_max scaled down by how far numeric hyperparameters sit from their
/// optimum: A_max / (1 + sum ln(v / opt)^2). Params without a sensitivity
/// entry, or non-positive values, do not contribute.
double effective_asymptote(const WorkloadProfile& profile, const Config& config);

/// Noise-free curve A_eff * (1 - exp(-k * step)).
double curve_value(const WorkloadProfile& profile, const Config& config, std::uint32_t step);

/// Identifies "the same experiment": dataset, image and configuration. The
/// session id is deliberately absent so that reruns and forks reproduce.
std::uint64_t run_key(const DatasetId& dataset, const ImageId& image, const Config& config);

/// Curve plus pseudo-normal noise drawn at counter `step` under (seed, run key).
double metric_value(const WorkloadProfile& profile, const Config& config, std::uint64_t seed, std::uint64_t key,
                    std::uint32_t step);

/// Memory ramps linearly to peak over memory_ramp_steps and stays there.
Bytes memory_usage(const WorkloadProfile& profile, std::uint32_t step);

/// First step whose modeled usage exceeds `allocation`, if any.
std::optional<std::uint32_t> oom_step(const WorkloadProfile& profile, Bytes allocation);

double utilization_at(const WorkloadProfile& profile, std::uint32_t step);

/// Canonical text of a configuration, stable across runs.
std::string canonical_config(const Config& config);

/// Content hash of a checkpoint: depends only on (seed, config, step).
std::string checkpoint_digest(std::uint64_t seed, const Config& config, std::uint32_t step);

/// Hidden test-set score of a checkpoint. Close to the converged curve value
/// (accuracy-like) or its complement (loss-like), perturbed by a small
/// dataset-keyed hash of the digest so that it cannot be read off training
/// metrics.
double evaluation_score(const DatasetId& dataset, MetricOrder order, const Checkpoint& checkpoint);

/// True if score a ranks strictly ahead of b.
inline bool better(MetricOrder order, double a, double b) {
  return order == MetricOrder::Ascending ? a < b : a > b;
}

/// Deterministic serving output for a payload against a checkpoint.
Json infer_output(const std::string& digest, const Json& payload);

}  // namespace deskml
