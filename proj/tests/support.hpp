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

// Shared fixtures for the test binaries.
#pragma once

#include "deskml/error.hpp"
#include "deskml/platform.hpp"

namespace deskml::testing {

inline WorkloadProfile quick_profile(std::uint32_t steps = 20, Duration step_ms = 1000) {
  WorkloadProfile p;
  p.steps_total = steps;
  p.step_duration = step_ms;
  p.noise_sigma = 0.01;
  p.sensitivity = {{"lr", 0.01}};
  return p;
}

/// `nodes` identical nodes, users alice/bob (team "vision") and root (admin),
/// public dataset "mnist" and team dataset "faces".
inline Scenario small_scenario(std::size_t nodes = 2, std::uint32_t gpus = 4) {
  Scenario sc;
  for (std::size_t i = 0; i < nodes; ++i) sc.nodes.push_back(NodeSpec{std::nullopt, gpus, 64 * kGiB});
  sc.users = {UserSpec{"root", Role::Admin, 1'000'000, {}},
              UserSpec{"alice", Role::User, 100'000, {"vision"}},
              UserSpec{"bob", Role::User, 100'000, {"vision"}},
              UserSpec{"carol", Role::User, 100'000, {}}};
  sc.datasets = {DatasetSpec{"mnist", "alice", 2 * kGiB, std::nullopt, "accuracy", MetricOrder::Descending},
                 DatasetSpec{"faces", "alice", kGiB, "vision", "loss", MetricOrder::Ascending}};
  sc.workloads["default"] = quick_profile();
  return sc;
}

inline RunRequest run_request(const UserId& user, const DatasetId& ds, Config cfg = {{"lr", 0.01}},
                              std::uint32_t gpus = 1) {
  RunRequest r;
  r.user = user;
  r.dataset = ds;
  r.config = std::move(cfg);
  r.gpus = gpus;
  r.profile = quick_profile();
  return r;
}

inline SessionId run(Platform& p, const RunRequest& r) {
  return p.with_primary([&](SessionManager& sm, Effects&) { return sm.run(r); });
}

inline SessionState state_of(Platform& p, const SessionId& id) {
  return p.with_state([&](const ControlState& st) { return st.session(id).state; });
}

inline bool all_terminal(Platform& p) {
  return p.with_state([](const ControlState& st) {
    for (const auto& [id, s] : st.sessions)
      if (!is_terminal(s.state)) return false;
    return true;
  });
}

/// A journal over an in-memory log with no replication or node agents, for
/// driving the scheduler and session manager directly.
struct Bench {
  EventLog log;
  ControlState state;
  VirtualClock clock;
  Journal journal{log, state, clock};
  SimConfig sim;
  Scheduler scheduler;
  SessionManager manager{journal, scheduler, sim};

  explicit Bench(SchedulerOptions opts = {}) : scheduler(opts) {}

  void add_node(const NodeId& id, std::uint32_t gpus, Bytes memory = 64 * kGiB) {
    journal.commit(rec::kNode, id, Json{{"op", "register"}, {"total_gpus", gpus}, {"total_memory", memory}});
  }
  void seed_users(std::int64_t credit = 100'000) {
    auto& reg = manager.registry();
    reg.create_user("root", Role::Admin, 1'000'000);
    reg.create_user("alice", Role::User, credit, {"vision"});
    reg.create_user("bob", Role::User, credit, {"vision"});
    reg.create_user("carol", Role::User, credit);
    reg.push_dataset("alice", "mnist", 2 * kGiB, Visibility::Public());
    reg.push_dataset("alice", "faces", kGiB, Visibility::TeamPrivate("vision"), "loss", MetricOrder::Ascending);
  }
};

/// Replays `records` one at a time and checks that no node is ever
/// oversubscribed. Returns a description of the first violation.
inline std::optional<std::string> audit_log(const std::vector<LogRecord>& records) {
  ControlState st;
  for (const auto& r : records) {
    st.apply(r);
    std::map<NodeId, std::pair<std::uint64_t, Bytes>> bound;
    for (const auto& [sid, b] : st.bindings) {
      bound[b.node].first += b.gpus;
      bound[b.node].second += b.memory;
    }
    for (const auto& [nid, n] : st.nodes) {
      auto [g, m] = bound[nid];
      if (g > n.total_gpus || m > n.total_memory)
        return "seq " + std::to_string(r.seq) + ": node " + nid + " bound " + std::to_string(g) + " GPUs / " +
               std::to_string(m) + " bytes over " + std::to_string(n.total_gpus) + " / " +
               std::to_string(n.total_memory);
      if (n.bound_gpus != g || n.bound_memory != m)
        return "seq " + std::to_string(r.seq) + ": node " + nid + " bookkeeping disagrees with bindings";
    }
    for (const auto& [sid, s] : st.sessions)
      if (holds_node(s.state) != s.node_id.has_value())
        return "seq " + std::to_string(r.seq) + ": session " + sid + " binding inconsistent with state";
  }
  return std::nullopt;
}

}  // namespace deskml::testing
