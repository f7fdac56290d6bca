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

#include <filesystem>

#include "deskml/types.hpp"

namespace deskml {

struct SimConfig {
  /// Dataset copy bandwidth, bytes per virtual second.
  Bytes bandwidth = kGiB;
  Duration heartbeat_interval = 1000;
  Duration failover_timeout = 3000;
  Duration telemetry_period = 1000;
  /// Scheduler tick: queue drain, credit charging, liveness checks.
  Duration tick = 1000;
  /// Checkpoint every this many steps (and always at the last step).
  std::uint32_t checkpoint_interval = 10;
  /// Node caches keep copied datasets. Off turns every fetch into a copy.
  bool caching = true;
  /// Per-node dataset cache size; unset means unbounded.
  std::optional<Bytes> cache_capacity;
  double credits_per_gpu_minute = 1.0;
  bool standby = true;
  std::uint64_t seed = 0;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

/// Throws InvalidArgument unless every duration and the bandwidth are positive
/// and failover_timeout > 2 * heartbeat_interval.
void validate(const SimConfig& cfg);

enum class FaultKind { CrashNode, CrashPrimary, NetworkDelay };

NLOHMANN_JSON_SERIALIZE_ENUM(FaultKind, {{FaultKind::CrashNode, "crash_node"},
                                         {FaultKind::CrashPrimary, "crash_primary"},
                                         {FaultKind::NetworkDelay, "network_delay"}})

/// Delay faults hold every message sent by `target` (a node id or
/// "scheduler-primary") during [at, at + window) for `delay`.
struct FaultSpec {
  Timestamp at = 0;
  FaultKind kind = FaultKind::CrashNode;
  std::string target;
  Duration delay = 0;
  Duration window = 0;

  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

struct NodeSpec {
  std::optional<NodeId> id;
  std::uint32_t gpus = 8;
  Bytes memory = 256 * kGiB;
  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

struct DatasetSpec {
  DatasetId id;
  UserId owner;
  Bytes size = kGiB;
  std::optional<TeamId> team;  // unset: public
  std::string metric = "accuracy";
  MetricOrder order = MetricOrder::Descending;
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct UserSpec {
  UserId id;
  Role role = Role::User;
  std::int64_t credit = 0;
  std::set<TeamId> teams;
  friend bool operator==(const UserSpec&, const UserSpec&) = default;
};

/// One `run` issued at a virtual time.
struct JobSpec {
  Timestamp at = 0;
  UserId user;
  DatasetId dataset;
  ImageId image = "base";
  std::uint32_t gpus = 1;
  Bytes memory = kGiB;
  std::string workload;
  Config config;
  std::optional<std::uint64_t> seed;
  friend bool operator==(const JobSpec&, const JobSpec&) = default;
};

/// Scenario file: nodes, datasets, users, workload templates, a job trace,
/// a fault schedule and the sim configuration.
struct Scenario {
  std::vector<NodeSpec> nodes;
  std::vector<DatasetSpec> datasets;
  std::vector<UserSpec> users;
  std::map<std::string, WorkloadProfile> workloads;
  std::vector<JobSpec> jobs;
  std::vector<FaultSpec> faults;
  SimConfig sim;
};

void to_json(Json& j, const SimConfig& v);
void from_json(const Json& j, SimConfig& v);
void to_json(Json& j, const FaultSpec& v);
void from_json(const Json& j, FaultSpec& v);
void to_json(Json& j, const NodeSpec& v);
void from_json(const Json& j, NodeSpec& v);
void to_json(Json& j, const DatasetSpec& v);
void from_json(const Json& j, DatasetSpec& v);
void to_json(Json& j, const UserSpec& v);
void from_json(const Json& j, UserSpec& v);
void to_json(Json& j, const JobSpec& v);
void from_json(const Json& j, JobSpec& v);
void to_json(Json& j, const Scenario& v);
void from_json(const Json& j, Scenario& v);

Scenario load_scenario(const std::filesystem::path& path);

}  // namespace deskml
