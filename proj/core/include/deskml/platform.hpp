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

#include <functional>
#include <memory>
#include <mutex>
#include <queue>

#include "deskml/node_agent.hpp"
#include "deskml/notifier.hpp"
#include "deskml/replication.hpp"
#include "deskml/session_manager.hpp"
#include "deskml/telemetry.hpp"

namespace deskml {

struct PlatformOptions {
  SchedulerOptions scheduler;
  /// Replica logs go to <data_dir>/<replica>.log when set.
  std::optional<std::filesystem::path> data_dir;
};

struct PlatformStats {
  std::vector<PromotionEvent> promotions;
  /// Replicas seen committing as primary, per epoch.
  std::map<std::uint64_t, std::set<std::string>> epoch_primaries;
  std::map<std::string, Timestamp> crashed_at;
  std::size_t commands = 0;
  std::size_t reports = 0;
  std::size_t reconciles = 0;
  std::size_t jobs_rejected = 0;
};

/// The whole desk-scale deployment in one process: a primary scheduler and a
/// hot standby, simulated nodes, and the network between them, all driven by
/// one discrete-event loop over virtual time. Messages never run inline; every
/// send becomes an event, so delivery order is (time, priority, send order).
///
/// Public methods are thread-safe.
class Platform {
 public:
  explicit Platform(Scenario scenario, PlatformOptions opts = {});
  ~Platform();

  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  /// Runs `fn` against the acting primary (highest live epoch), then ships
  /// the resulting effects. Throws Error(Unavailable) if no primary is up.
  template <typename F>
  auto with_primary(F&& fn) {
    std::lock_guard lock(mu_);
    auto& slot = acting();
    Effects fx;
    auto before = slot.replica->log().max_seq();
    if constexpr (std::is_void_v<decltype(fn(*slot.manager, fx))>) {
      fn(*slot.manager, fx);
      finish_call(slot, std::move(fx), before);
    } else {
      auto result = fn(*slot.manager, fx);
      finish_call(slot, std::move(fx), before);
      return result;
    }
  }

  /// Read-only access to the acting primary's state.
  template <typename F>
  auto with_state(F&& fn) const {
    std::lock_guard lock(mu_);
    return fn(acting().replica->state());
  }

  /// Processes every event due at or before `t`, then sets the clock to `t`.
  void advance_to(Timestamp t);
  void advance_by(Duration d) { advance_to(now() + d); }
  /// Advances in `step` increments until `done` holds or `limit` is reached.
  /// Returns whether `done` held.
  bool run_until(const std::function<bool()>& done, Timestamp limit, Duration step = 1000);

  Timestamp now() const { return clock_.now(); }
  const Clock& clock() const { return clock_; }
  const SimConfig& sim() const { return scenario_.sim; }
  const Scenario& scenario() const { return scenario_; }
  const WorkloadProfile& workload(const std::string& name) const;

  /// Crashes a node or a scheduler replica ("scheduler-primary" names the
  /// acting primary) at the current time.
  void crash(const std::string& target);

  std::size_t replica_count() const { return slots_.size(); }
  const Replica& replica(std::size_t i) const { return *slots_.at(i).replica; }
  /// Name of the acting primary, if any.
  std::optional<std::string> primary_name() const;
  bool reconciling() const;

  const NodeAgent& agent(const NodeId& id) const;
  std::vector<NodeId> node_ids() const;

  TelemetryStore& telemetry() { return telemetry_; }
  Notifier& notifier() { return notifier_; }
  PlatformStats stats() const;
  /// Session created for scenario job `index`, if it was admitted.
  std::optional<SessionId> job_session(std::size_t index) const;

  /// Records [from, to] of the acting primary's log.
  std::vector<LogRecord> log_range(Seq from, Seq to) const;

 private:
  struct Slot {
    std::unique_ptr<Replica> replica;
    std::unique_ptr<Journal> journal;
    std::unique_ptr<Scheduler> scheduler;
    std::unique_ptr<SessionManager> manager;
    bool reconciling = false;
    Timestamp reconcile_deadline = 0;
    std::set<NodeId> reconciled;
    std::map<NodeId, Timestamp> node_seen;
    /// (log seq, report seq) of committed reports not yet known durable.
    std::map<NodeId, std::deque<std::pair<Seq, Seq>>> pending;
    std::map<NodeId, Seq> durable;
  };

  struct Event {
    Timestamp at;
    int prio;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& o) const {
      return std::tie(at, prio, seq) > std::tie(o.at, o.prio, o.seq);
    }
  };

  struct Delay {
    std::string endpoint;
    Timestamp from;
    Timestamp until;
    Duration delay;
  };

  class Env;

  Slot& acting();
  const Slot& acting() const;
  Slot* slot_by_name(const std::string& name);
  bool is_primary(const Slot& s) const;

  void schedule(Timestamp at, int prio, std::function<void()> fn);
  /// Delivers `fn` over the link from -> to, honoring delay faults and FIFO order.
  void send(const std::string& from, const std::string& to, std::function<void()> fn);

  void bootstrap();
  void reset_manager(Slot& s);
  void finish_call(Slot& s, Effects fx, Seq before);
  void apply_effects(Slot& s, Effects fx);
  void note_acting(Slot& s, Seq before);
  void drain(Slot& s);

  void replica_heartbeat(std::size_t i);
  void failover_check(std::size_t i);
  void promote(Slot& s, const PromotionEvent& ev);
  void begin_reconcile(Slot& s);
  void scheduler_tick(std::size_t i);
  void on_report(Slot& s, const NodeId& node, const Json& report);
  void on_node_heartbeat(Slot& s, const NodeId& node);
  void on_reconcile(Slot& s, const NodeId& node, const Json& body);
  void finish_reconcile_if_done(Slot& s);
  Seq durable_rseq(Slot& s, const NodeId& node);
  void inject(const FaultSpec& f);
  void submit_job(std::size_t index);

  mutable std::recursive_mutex mu_;
  Scenario scenario_;
  PlatformOptions opts_;
  VirtualClock clock_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t next_event_ = 0;
  std::unique_ptr<Env> env_;
  std::vector<Slot> slots_;
  std::map<NodeId, std::unique_ptr<NodeAgent>> agents_;
  std::map<std::pair<std::string, std::string>, Timestamp> link_tail_;
  std::vector<Delay> delays_;
  TelemetryStore telemetry_;
  Notifier notifier_;
  PlatformStats stats_;
  std::map<std::size_t, SessionId> job_sessions_;
};

}  // namespace deskml
