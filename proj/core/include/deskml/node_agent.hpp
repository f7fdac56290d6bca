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

#include <deque>
#include <functional>

#include "deskml/scenario.hpp"
#include "deskml/types.hpp"

namespace deskml {

/// What a node agent needs from the world: virtual time, timers, and the
/// links back to the schedulers and the telemetry store.
class AgentEnv {
 public:
  virtual ~AgentEnv() = default;
  virtual Timestamp now() const = 0;
  virtual void schedule(Timestamp at, std::function<void()> fn) = 0;
  /// Delivered to every live primary.
  virtual void send_report(const NodeId& node, const Json& report) = 0;
  virtual void send_heartbeat(const NodeId& node, Timestamp ts) = 0;
  /// Answer to an epoch announcement, delivered to the announcing primary.
  virtual void send_reconcile(const NodeId& node, std::uint64_t epoch, const Json& body) = 0;
  virtual void record_telemetry(const TelemetrySample& sample) = 0;
};

struct LaunchCommand {
  std::uint64_t epoch = 0;
  Session session;
  Bytes dataset_size = 0;
  bool serve = false;
};

/// Simulated compute node. Runs synthetic workloads step by step, keeps the
/// dataset and image caches, enforces memory limits and reports every
/// observable change as a numbered report. Reports stay in the outbox until
/// a primary declares them durable, so they can be replayed to a new primary.
class NodeAgent {
 public:
  enum class Phase { Fetching, Running, Held, Serving };

  NodeAgent(NodeId id, std::uint32_t gpus, Bytes memory, const SimConfig& cfg, AgentEnv& env);

  /// Starts heartbeat and telemetry timers.
  void start();
  /// Stops everything. Hosted sessions and caches vanish.
  void crash();

  void launch(const LaunchCommand& cmd);
  void halt(std::uint64_t epoch, const SessionId& session);
  /// PBT hook: swap config, move the barrier, and optionally release a held session.
  void update(std::uint64_t epoch, const SessionId& session, const std::optional<Config>& config,
              std::optional<std::uint32_t> hold_step, bool release);
  /// A primary took over in `epoch` and has applied reports up to last_rseq.
  void announce(std::uint64_t epoch, Seq last_rseq);
  void heartbeat_ack(std::uint64_t epoch, Seq durable_rseq);
  /// The primary saw a gap; resend everything after last_rseq.
  void resync(std::uint64_t epoch, Seq last_rseq);

  const NodeId& id() const { return id_; }
  bool alive() const { return alive_; }
  std::uint64_t epoch() const { return epoch_; }
  std::uint32_t total_gpus() const { return total_gpus_; }
  std::uint32_t free_gpus() const;
  Bytes free_memory() const;
  bool hosts(const SessionId& session) const { return hosted_.count(session) > 0; }
  std::optional<Phase> phase(const SessionId& session) const;
  std::vector<SessionId> hosted() const;
  std::size_t outbox_size() const { return outbox_.size(); }
  Seq last_rseq() const { return next_rseq_ - 1; }
  /// Virtual time spent copying datasets so far.
  Duration copy_time_total() const { return copy_time_total_; }
  std::size_t copies() const { return copies_; }
  std::set<DatasetId> cached_datasets() const;

 private:
  struct Hosted {
    Session session;
    Phase phase = Phase::Fetching;
    std::vector<std::uint32_t> gpu_indices;
    std::uint32_t step = 0;
    std::uint32_t suppress_through = 0;
    std::uint64_t key = 0;
    std::optional<std::uint32_t> oom_at;
    std::uint64_t token = 0;
  };
  struct CacheEntry {
    Bytes size = 0;
    Timestamp last_access = 0;
  };

  bool fenced(std::uint64_t epoch, const char* what);
  void report(Json body);
  void on_fetched(const SessionId& sid, std::uint64_t token);
  void on_step(const SessionId& sid, std::uint64_t token);
  void schedule_step(Hosted& h);
  void release(const SessionId& sid);
  std::vector<DatasetId> admit_to_cache(const DatasetId& ds, Bytes size);
  void heartbeat_tick();
  void telemetry_tick();

  NodeId id_;
  std::uint32_t total_gpus_;
  Bytes total_memory_;
  SimConfig cfg_;
  AgentEnv& env_;
  bool alive_ = true;
  std::uint64_t epoch_ = 0;
  std::uint64_t next_token_ = 1;
  Seq next_rseq_ = 1;
  std::deque<Json> outbox_;
  std::map<SessionId, Hosted> hosted_;
  std::vector<std::optional<SessionId>> gpu_owner_;
  std::map<DatasetId, CacheEntry> cache_;
  std::set<ImageId> images_;
  Duration copy_time_total_ = 0;
  std::size_t copies_ = 0;
};

std::string to_string(NodeAgent::Phase p);

}  // namespace deskml
