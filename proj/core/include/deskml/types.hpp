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

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace deskml {

using Json = nlohmann::json;

/// Milliseconds on the (usually virtual) platform clock.
using Timestamp = std::int64_t;
using Duration = std::int64_t;
using Bytes = std::uint64_t;
using Seq = std::uint64_t;

using NodeId = std::string;
using SessionId = std::string;
using DatasetId = std::string;
using ImageId = std::string;
using UserId = std::string;
using TeamId = std::string;
using CheckpointId = std::string;

inline constexpr Bytes kKiB = 1024;
inline constexpr Bytes kMiB = 1024 * kKiB;
inline constexpr Bytes kGiB = 1024 * kMiB;

enum class Liveness { Alive, Dead };

enum class SessionState { Queued, Preparing, Running, Done, Failed, Stopped, KilledOom, Serving };

enum class Role { Admin, User };

enum class MetricOrder { Ascending, Descending };

enum class NotificationKind { Failed, KilledOom, NodeDead, CreditStop };

std::string to_string(SessionState s);
std::string to_string(MetricOrder o);
std::string to_string(NotificationKind k);
SessionState session_state_from_string(const std::string& s);

bool is_terminal(SessionState s);
/// Preparing, Running and Serving sessions hold a node.
bool holds_node(SessionState s);

/// Hyperparameter value: integer, real or string.
using ConfigValue = std::variant<std::int64_t, double, std::string>;
using Config = std::map<std::string, ConfigValue>;

std::string format_config_value(const ConfigValue& v);
/// Parses "128" as integer, "0.1" as real, anything else as string.
ConfigValue parse_config_value(const std::string& text);
std::optional<double> numeric_value(const ConfigValue& v);

struct ResourceRequest {
  std::uint32_t gpus = 0;
  Bytes memory = 0;
  DatasetId dataset_id;
  ImageId image_id;

  friend bool operator==(const ResourceRequest&, const ResourceRequest&) = default;
};

struct NodeDescriptor {
  NodeId node_id;
  std::uint32_t total_gpus = 0;
  std::uint32_t available_gpus = 0;
  Bytes total_memory = 0;
  Bytes available_memory = 0;
  std::set<DatasetId> cached_datasets;
  std::set<ImageId> cached_images;
  Liveness liveness = Liveness::Alive;
  Timestamp last_heartbeat = 0;

  friend bool operator==(const NodeDescriptor&, const NodeDescriptor&) = default;
};

/// Parameters of the synthetic job that stands in for real training.
struct WorkloadProfile {
  double asymptote = 0.9;
  double rate = 0.05;
  double noise_sigma = 0.0;
  std::uint32_t steps_total = 100;
  Duration step_duration = 1000;
  Bytes peak_memory = kGiB;
  /// Modeled memory ramps linearly to peak over this many steps.
  std::uint32_t memory_ramp_steps = 1;
  /// Utilization percent per step, cycled; one entry means constant.
  std::vector<double> utilization{90.0};
  std::optional<std::uint32_t> failure_at;
  std::string metric_name = "accuracy";
  /// Optimal value per numeric hyperparameter; off-optimum configs lower the asymptote.
  std::map<std::string, double> sensitivity;

  friend bool operator==(const WorkloadProfile&, const WorkloadProfile&) = default;
};

struct Checkpoint {
  CheckpointId checkpoint_id;
  SessionId session_id;
  std::uint32_t step = 0;
  std::string digest;
  /// Noise-free learning-curve value captured at this step.
  double curve_value = 0.0;
  Timestamp created_at = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct Session {
  SessionId session_id;
  UserId owner;
  std::optional<TeamId> team;
  DatasetId dataset_id;
  ImageId image_id;
  Config config;
  ResourceRequest resources;
  SessionState state = SessionState::Queued;
  std::optional<NodeId> node_id;
  std::optional<SessionId> parent;
  std::uint64_t seed = 0;
  Timestamp created_at = 0;
  std::optional<Timestamp> started_at;
  std::optional<Timestamp> finished_at;

  WorkloadProfile profile;
  /// Steps up to and including this one are already done (warm start).
  std::uint32_t start_step = 0;
  /// Highest step whose metrics were reported.
  std::uint32_t last_step = 0;
  std::vector<Checkpoint> checkpoints;
  std::vector<std::string> memos;
  std::optional<CheckpointId> serving_checkpoint;
  std::optional<std::string> sweep_id;
  /// PBT barrier: the node pauses once this step completes.
  std::optional<std::uint32_t> hold_step;
  std::optional<std::uint32_t> at_barrier;
  /// Client-chosen key that makes a retried run return the same session.
  std::optional<std::string> request_id;

  friend bool operator==(const Session&, const Session&) = default;
};

struct Visibility {
  bool is_public = true;
  TeamId team;  // set iff !is_public

  static Visibility Public() { return {}; }
  static Visibility TeamPrivate(TeamId t) { return {false, std::move(t)}; }
  friend bool operator==(const Visibility&, const Visibility&) = default;
};

struct Dataset {
  DatasetId dataset_id;
  UserId owner;
  Visibility visibility;
  Bytes size = 0;
  Timestamp created_at = 0;
  Timestamp last_access = 0;
  std::string path;
  std::string metric_name = "accuracy";
  MetricOrder order = MetricOrder::Descending;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct UserAccount {
  UserId user_id;
  Role role = Role::User;
  std::int64_t credit_balance = 0;
  std::set<TeamId> teams;

  friend bool operator==(const UserAccount&, const UserAccount&) = default;
};

struct MetricEvent {
  SessionId session_id;
  std::uint32_t step = 0;
  std::string name;
  double value = 0.0;
  Timestamp timestamp = 0;

  friend bool operator==(const MetricEvent&, const MetricEvent&) = default;
};

struct TelemetrySample {
  NodeId node_id;
  std::uint32_t gpu_index = 0;
  double utilization_pct = 0.0;
  Bytes memory_used = 0;
  std::optional<SessionId> session_id;
  Timestamp timestamp = 0;

  friend bool operator==(const TelemetrySample&, const TelemetrySample&) = default;
};

struct Submission {
  std::string submission_id;
  SessionId session_id;
  UserId user;
  DatasetId dataset_id;
  CheckpointId checkpoint_id;
  std::string metric_name;
  MetricOrder order = MetricOrder::Descending;
  double score = 0.0;
  Timestamp timestamp = 0;

  friend bool operator==(const Submission&, const Submission&) = default;
};

struct Notification {
  UserId recipient;
  SessionId session_id;
  NotificationKind kind = NotificationKind::Failed;
  std::string detail;
  Timestamp timestamp = 0;

  friend bool operator==(const Notification&, const Notification&) = default;
};

struct LogRecord {
  Seq seq = 0;
  std::string kind;
  std::string id;
  Timestamp ts = 0;
  Json payload;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

struct LogLine {
  Timestamp ts = 0;
  std::string text;
  friend bool operator==(const LogLine&, const LogLine&) = default;
};

// JSON mappings. Field names are the wire names.
void to_json(Json& j, const ConfigValue& v);
void from_json(const Json& j, ConfigValue& v);
void to_json(Json& j, const ResourceRequest& v);
void from_json(const Json& j, ResourceRequest& v);
void to_json(Json& j, const NodeDescriptor& v);
void from_json(const Json& j, NodeDescriptor& v);
void to_json(Json& j, const WorkloadProfile& v);
void from_json(const Json& j, WorkloadProfile& v);
void to_json(Json& j, const Checkpoint& v);
void from_json(const Json& j, Checkpoint& v);
void to_json(Json& j, const Session& v);
void from_json(const Json& j, Session& v);
void to_json(Json& j, const Visibility& v);
void from_json(const Json& j, Visibility& v);
void to_json(Json& j, const Dataset& v);
void from_json(const Json& j, Dataset& v);
void to_json(Json& j, const UserAccount& v);
void from_json(const Json& j, UserAccount& v);
void to_json(Json& j, const MetricEvent& v);
void from_json(const Json& j, MetricEvent& v);
void to_json(Json& j, const TelemetrySample& v);
void from_json(const Json& j, TelemetrySample& v);
void to_json(Json& j, const Submission& v);
void from_json(const Json& j, Submission& v);
void to_json(Json& j, const Notification& v);
void from_json(const Json& j, Notification& v);
void to_json(Json& j, const LogRecord& v);
void from_json(const Json& j, LogRecord& v);
void to_json(Json& j, const LogLine& v);
void from_json(const Json& j, LogLine& v);

NLOHMANN_JSON_SERIALIZE_ENUM(Liveness, {{Liveness::Alive, "Alive"}, {Liveness::Dead, "Dead"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SessionState, {{SessionState::Queued, "Queued"},
                                            {SessionState::Preparing, "Preparing"},
                                            {SessionState::Running, "Running"},
                                            {SessionState::Done, "Done"},
                                            {SessionState::Failed, "Failed"},
                                            {SessionState::Stopped, "Stopped"},
                                            {SessionState::KilledOom, "KilledOom"},
                                            {SessionState::Serving, "Serving"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Role, {{Role::Admin, "Admin"}, {Role::User, "User"}})
NLOHMANN_JSON_SERIALIZE_ENUM(MetricOrder, {{MetricOrder::Ascending, "Ascending"},
                                           {MetricOrder::Descending, "Descending"}})
NLOHMANN_JSON_SERIALIZE_ENUM(NotificationKind, {{NotificationKind::Failed, "Failed"},
                                                {NotificationKind::KilledOom, "KilledOom"},
                                                {NotificationKind::NodeDead, "NodeDead"},
                                                {NotificationKind::CreditStop, "CreditStop"}})

// Validators. Each throws Error(InvalidArgument | Invariant) naming the broken rule.
void validate(const NodeDescriptor& n);
void validate(const ResourceRequest& r);
void validate(const WorkloadProfile& p);
void validate(const Dataset& d);
void validate(const UserAccount& u);
void validate(const TelemetrySample& s);
void validate(const Session& s);

}  // namespace deskml

// ConfigValue is a std::variant, so argument-dependent lookup cannot find the
// deskml overloads; route it explicitly.
template <>
struct nlohmann::adl_serializer<deskml::ConfigValue> {
  static void to_json(nlohmann::json& j, const deskml::ConfigValue& v) { deskml::to_json(j, v); }
  static void from_json(const nlohmann::json& j, deskml::ConfigValue& v) { deskml::from_json(j, v); }
};
