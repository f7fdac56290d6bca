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

#include "deskml/control_state.hpp"
#include "deskml/hashing.hpp"
#include "deskml/placement.hpp"

namespace deskml {

enum class PlacementPolicy { Defragment, RandomFeasible };

struct AdmissionDecision {
  bool accepted = false;
  /// 1-based position the ticket takes in the queue.
  std::size_t queue_position = 0;
  /// CreditExhausted, Infeasible or PermissionDenied when rejected.
  std::string reason;

  static AdmissionDecision Accepted(std::size_t pos) { return {true, pos, {}}; }
  static AdmissionDecision Rejected(std::string why) { return {false, 0, std::move(why)}; }
};

struct SchedulerOptions {
  PlacementPolicy policy = PlacementPolicy::Defragment;
  std::uint64_t policy_seed = 0;
  /// How long a blocked queue head tolerates backfill before a node is
  /// reserved for it.
  Duration backfill_patience = 30'000;
};

/// Admission, queueing and placement over one replica's journal. Every
/// mutation goes through the journal, so the scheduler itself only keeps
/// volatile bookkeeping (baseline RNG, head-blocked timer).
class Scheduler {
 public:
  explicit Scheduler(SchedulerOptions opts = {}) : opts_(opts), rng_(opts.policy_seed) {}

  /// Permission first, then credit, then feasibility against total capacity
  /// of live nodes. Does not mutate state.
  AdmissionDecision admit(const Journal& journal, const UserId& user, const ResourceRequest& request) const;

  NodeDescriptor bind(Journal& journal, const SessionId& session, const NodeId& node);
  /// Moves a bound session into `to` (which must not hold a node) and returns
  /// the node's updated descriptor. A second release is a logged no-op.
  std::optional<NodeDescriptor> release(Journal& journal, const SessionId& session, SessionState to,
                                        const std::string& reason);

  /// FIFO with backfill: places the head when it fits; otherwise later
  /// tickets that fit are placed while the head keeps its position.
  std::vector<std::pair<SessionId, NodeId>> drain_queue(Journal& journal);

  std::optional<NodeId> choose(const ResourceRequest& request, std::span<const NodeDescriptor> nodes);

  const SchedulerOptions& options() const { return opts_; }

 private:
  SchedulerOptions opts_;
  CounterRng rng_;
  SessionId blocked_head_;
  Timestamp blocked_since_ = 0;
};

}  // namespace deskml
