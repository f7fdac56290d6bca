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

#include "deskml/hashing.hpp"
#include "deskml/node_agent.hpp"
#include "deskml/registry.hpp"
#include "deskml/scheduler.hpp"

namespace deskml {

/// Something the control plane wants a node agent to do. The platform stamps
/// the current epoch and delivers it.
struct AgentCommand {
  enum class Kind { Launch, Halt, Update, Resync };
  Kind kind = Kind::Launch;
  NodeId node;
  SessionId session;
  LaunchCommand launch;
  std::optional<Config> config;
  /// 0 clears the barrier.
  std::optional<std::uint32_t> hold_step;
  bool release = false;
  Seq last_rseq = 0;
};

/// Side effects produced by a control-plane operation, applied by the caller
/// after the corresponding records are committed.
struct Effects {
  std::vector<AgentCommand> commands;
  std::vector<Notification> notifications;

  void merge(Effects&& other);
};

struct RunRequest {
  UserId user;
  DatasetId dataset;
  ImageId image = "base";
  Config config;
  std::uint32_t gpus = 1;
  Bytes memory = kGiB;
  WorkloadProfile profile;
  std::optional<std::uint64_t> seed;
  std::optional<TeamId> team;
  std::optional<std::string> sweep_id;
  std::optional<std::uint32_t> hold_step;
  /// Retrying with the same id returns the session the first attempt made.
  std::optional<std::string> request_id;
};

struct CompareResult {
  Config common;
  std::vector<std::string> columns;
  std::vector<SessionId> rows;
  /// rows x columns; nullopt where the session lacks the parameter.
  std::vector<std::vector<std::optional<ConfigValue>>> cells;
};

struct LeaderboardEntry {
  std::uint32_t rank = 0;
  UserId user;
  double score = 0.0;
  SessionId session;
  std::string submission_id;
  Timestamp timestamp = 0;
};

struct Leaderboard {
  DatasetId dataset;
  std::string metric_name;
  MetricOrder order = MetricOrder::Descending;
  std::vector<LeaderboardEntry> entries;
  /// Per user, all submissions in time order.
  std::map<UserId, std::vector<Submission>> history;
};

struct SweepLaunch {
  std::string sweep_id;
  std::vector<SessionId> sessions;
  std::uint32_t rejected = 0;
};

struct SweepBest {
  SessionId session;
  CheckpointId checkpoint;
  double score = 0.0;
};

struct InferResult {
  SessionId session;
  CheckpointId checkpoint;
  Json output;
  Duration latency_ms = 0;
  std::uint64_t requests = 0;
  Duration total_latency_ms = 0;
};

void to_json(Json& j, const CompareResult& v);
void to_json(Json& j, const LeaderboardEntry& v);
void to_json(Json& j, const Leaderboard& v);
void to_json(Json& j, const SweepLaunch& v);
void to_json(Json& j, const SweepBest& v);
void to_json(Json& j, const InferResult& v);

/// Configurations a sweep spawns, in spawn order. Grid enumerates the
/// cartesian product with the last parameter varying fastest; Random and PBT
/// draw from the space with the sweep seed.
std::vector<Config> expand_sweep(const SweepSpec& spec);

/// PBT explore step: multiplies every numeric space parameter of `source` by
/// a factor drawn from spec.perturb_factors. Records the factors in `factors`.
Config perturb_config(const Config& source, const SweepSpec& spec, CounterRng& rng, Json& factors);

/// Steps between PBT barriers.
std::uint32_t pbt_interval(const SweepSpec& spec);

/// Session lifecycle and everything hanging off sessions: fork lineage,
/// metrics, logs, checkpoints, submissions, leaderboards, sweeps, serving,
/// notifications and credit enforcement. Mutations go through the journal;
/// work for node agents is returned as Effects.
class SessionManager {
 public:
  SessionManager(Journal& journal, Scheduler& scheduler, const SimConfig& cfg);

  SessionId run(const RunRequest& req);
  SessionState stop(const UserId& caller, const SessionId& id, Effects& fx);
  void rm(const UserId& caller, const SessionId& id);
  SessionState resume(const UserId& caller, const SessionId& id);
  SessionId fork(const UserId& caller, const SessionId& id, const Config& overrides,
                 std::optional<std::uint64_t> seed = std::nullopt);

  const Session& get(const UserId& caller, const SessionId& id) const;
  std::vector<Session> list(const UserId& caller, const std::optional<UserId>& owner = {},
                            const std::optional<SessionState>& state = {}) const;
  /// Ordered by (step, name).
  std::vector<MetricEvent> events(const UserId& caller, const SessionId& id,
                                  const std::optional<std::string>& name = {}) const;
  std::vector<LogLine> logs(const UserId& caller, const SessionId& id) const;
  std::vector<Checkpoint> checkpoints(const UserId& caller, const SessionId& id) const;
  CompareResult compare(const UserId& caller, const std::vector<SessionId>& ids) const;
  void memo(const UserId& caller, const SessionId& id, const std::string& text);

  Submission submit(const UserId& caller, const SessionId& id, const std::optional<CheckpointId>& checkpoint = {});
  Leaderboard leaderboard(const UserId& caller, const DatasetId& dataset) const;

  SweepLaunch sweep(const UserId& caller, const SweepSpec& spec);
  const SweepRecord& sweep_status(const UserId& caller, const std::string& id) const;
  SweepBest sweep_best(const UserId& caller, const std::string& id) const;

  NodeId serve(const UserId& caller, const SessionId& id, const std::optional<CheckpointId>& checkpoint,
               Effects& fx);
  InferResult infer(const UserId& caller, const SessionId& id, const Json& payload);

  // Control loop, driven by the primary.
  Effects ingest_report(const NodeId& node, const Json& report);
  Effects node_dead(const NodeId& node, const std::string& why);
  /// Charges GPU time of running sessions since the previous call and
  /// safe-stops every session of a user whose balance hits zero.
  Effects charge_tick();
  /// Runs PBT exploit/explore for sweeps whose members all reached the barrier.
  Effects sweep_tick();
  Effects drain();
  LaunchCommand launch_for(const SessionId& id) const;
  /// Restarts charge accounting at `now` (used after promotion).
  void reset_charge_clock(Timestamp now) { last_charge_ = now; }

  Registry& registry() { return registry_; }
  const Registry& registry() const { return registry_; }
  Scheduler& scheduler() { return scheduler_; }
  Journal& journal() { return journal_; }

 private:
  const Session& visible(const UserId& caller, const SessionId& id) const;
  Notification notify(const Session& s, NotificationKind kind, const std::string& detail);
  void safe_stop(const Session& s, const std::string& reason, Effects& fx, bool notify_owner);
  const Checkpoint& pick_checkpoint(const Session& s, const std::optional<CheckpointId>& id) const;
  std::uint64_t fresh_seed(const SessionId& id) const;

  Journal& journal_;
  Scheduler& scheduler_;
  Registry registry_;
  SimConfig cfg_;
  Timestamp last_charge_ = 0;
  std::map<SessionId, std::pair<std::uint64_t, Duration>> serving_stats_;
};

}  // namespace deskml
