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

#include "deskml/scheduler.hpp"

#include <spdlog/spdlog.h>

#include "deskml/error.hpp"
#include "deskml/registry.hpp"

namespace deskml {

AdmissionDecision Scheduler::admit(const Journal& journal, const UserId& user,
                                   const ResourceRequest& request) const {
  const auto& st = journal.state();
  auto u = st.users.find(user);
  if (u == st.users.end()) return AdmissionDecision::Rejected("PermissionDenied");
  auto d = st.datasets.find(request.dataset_id);
  if (d == st.datasets.end()) return AdmissionDecision::Rejected("PermissionDenied");
  if (!d->second.visibility.is_public && !u->second.teams.count(d->second.visibility.team))
    return AdmissionDecision::Rejected("PermissionDenied");
  if (u->second.credit_balance <= 0) return AdmissionDecision::Rejected("CreditExhausted");
  bool feasible = false;
  for (const auto& [id, n] : st.nodes) {
    if (n.liveness == Liveness::Alive && n.total_gpus >= request.gpus && n.total_memory >= request.memory) {
      feasible = true;
      break;
    }
  }
  if (!feasible) return AdmissionDecision::Rejected("Infeasible");
  return AdmissionDecision::Accepted(st.queue.size() + 1);
}

NodeDescriptor Scheduler::bind(Journal& journal, const SessionId& session, const NodeId& node) {
  const auto& s = journal.state().session(session);
  journal.commit(rec::kSession, session,
                 Json{{"op", "bind"}, {"node", node}, {"gpus", s.resources.gpus}, {"memory", s.resources.memory}});
  return journal.state().node_descriptor(node);
}

std::optional<NodeDescriptor> Scheduler::release(Journal& journal, const SessionId& session, SessionState to,
                                                 const std::string& reason) {
  const auto& st = journal.state();
  auto b = st.bindings.find(session);
  if (b == st.bindings.end()) {
    spdlog::warn("release of {}: session is not bound, ignoring", session);
    return std::nullopt;
  }
  if (holds_node(to)) throw Error(ErrorCode::InvalidArgument, "release target state must not hold a node");
  NodeId node = b->second.node;
  journal.commit(rec::kSession, session, Json{{"op", "transition"}, {"to", to}, {"reason", reason}});
  return st.node_descriptor(node);
}

std::optional<NodeId> Scheduler::choose(const ResourceRequest& request, std::span<const NodeDescriptor> nodes) {
  if (opts_.policy == PlacementPolicy::RandomFeasible) return place_random_feasible(request, nodes, rng_.uniform());
  return place(request, nodes);
}

std::vector<std::pair<SessionId, NodeId>> Scheduler::drain_queue(Journal& journal) {
  std::vector<std::pair<SessionId, NodeId>> placed;
  const auto& st = journal.state();
  if (st.queue.empty()) {
    blocked_head_.clear();
    return placed;
  }
  const std::vector<SessionId> tickets(st.queue.begin(), st.queue.end());
  auto nodes = st.node_descriptors(true);

  std::optional<NodeId> reserved;
  bool head = true;
  for (const auto& id : tickets) {
    const auto& req = st.session(id).resources;
    std::vector<NodeDescriptor> candidates;
    for (const auto& n : nodes)
      if (!reserved || n.node_id != *reserved) candidates.push_back(n);
    auto node = choose(req, candidates);
    if (node) {
      bind(journal, id, *node);
      placed.emplace_back(id, *node);
      for (auto& n : nodes) {
        if (n.node_id == *node) n = st.node_descriptor(*node);
      }
      if (head) blocked_head_.clear();
    } else if (head) {
      if (blocked_head_ != id) {
        blocked_head_ = id;
        blocked_since_ = journal.now();
      }
      if (journal.now() - blocked_since_ >= opts_.backfill_patience) {
        // Reserve the node closest to fitting the head so it drains.
        const NodeDescriptor* best = nullptr;
        for (const auto& n : nodes) {
          if (n.total_gpus < req.gpus || n.total_memory < req.memory) continue;
          if (!best || n.available_gpus > best->available_gpus ||
              (n.available_gpus == best->available_gpus && n.available_memory > best->available_memory))
            best = &n;
        }
        if (best) reserved = best->node_id;
      }
    }
    head = false;
  }
  return placed;
}

}  // namespace deskml
