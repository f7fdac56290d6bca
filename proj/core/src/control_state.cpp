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

#include "deskml/control_state.hpp"

#include <algorithm>

#include "deskml/error.hpp"
#include "deskml/hashing.hpp"
#include "deskml/lifecycle.hpp"

namespace deskml {

namespace {

[[noreturn]] void violated(const std::string& what) { throw Error(ErrorCode::Invariant, what); }

std::string op_of(const LogRecord& r) { return r.payload.value("op", std::string()); }

}  // namespace

void to_json(Json& j, const NodeRecord& v) {
  j = Json{{"total_gpus", v.total_gpus},         {"total_memory", v.total_memory},
           {"bound_gpus", v.bound_gpus},         {"bound_memory", v.bound_memory},
           {"cached_datasets", v.cached_datasets}, {"cached_images", v.cached_images},
           {"liveness", v.liveness}};
}

void from_json(const Json& j, NodeRecord& v) {
  j.at("total_gpus").get_to(v.total_gpus);
  j.at("total_memory").get_to(v.total_memory);
  j.at("bound_gpus").get_to(v.bound_gpus);
  j.at("bound_memory").get_to(v.bound_memory);
  j.at("cached_datasets").get_to(v.cached_datasets);
  j.at("cached_images").get_to(v.cached_images);
  j.at("liveness").get_to(v.liveness);
}

void to_json(Json& j, const Binding& v) { j = Json{{"node", v.node}, {"gpus", v.gpus}, {"memory", v.memory}}; }

void from_json(const Json& j, Binding& v) {
  j.at("node").get_to(v.node);
  j.at("gpus").get_to(v.gpus);
  j.at("memory").get_to(v.memory);
}

void to_json(Json& j, const UsageAccrual& v) { j = Json{{"gpu_ms", v.gpu_ms}, {"charged", v.charged}}; }

void from_json(const Json& j, UsageAccrual& v) {
  j.at("gpu_ms").get_to(v.gpu_ms);
  j.at("charged").get_to(v.charged);
}

void ControlState::log_line(const SessionId& id, Timestamp ts, std::string text) {
  logs[id].push_back({ts, std::move(text)});
}

void ControlState::bind(Session& s, const NodeId& node_id, std::uint32_t gpus, Bytes memory) {
  auto it = nodes.find(node_id);
  if (it == nodes.end()) violated("bind to unknown node " + node_id);
  auto& n = it->second;
  if (n.liveness != Liveness::Alive) violated("bind to dead node " + node_id);
  if (n.bound_gpus + gpus > n.total_gpus || n.bound_memory + memory > n.total_memory)
    violated("bind of " + s.session_id + " oversubscribes node " + node_id);
  if (bindings.count(s.session_id)) violated("session " + s.session_id + " is already bound");
  n.bound_gpus += gpus;
  n.bound_memory += memory;
  bindings[s.session_id] = {node_id, gpus, memory};
  s.node_id = node_id;
}

void ControlState::unbind(Session& s) {
  auto it = bindings.find(s.session_id);
  if (it == bindings.end()) return;
  auto& n = nodes.at(it->second.node);
  n.bound_gpus -= it->second.gpus;
  n.bound_memory -= it->second.memory;
  bindings.erase(it);
  s.node_id.reset();
}

void ControlState::add_checkpoint(Session& s, Checkpoint c) {
  c.checkpoint_id = "c" + std::to_string(next_checkpoint++);
  c.session_id = s.session_id;
  s.checkpoints.push_back(std::move(c));
}

void ControlState::transition(Session& s, SessionState to, Timestamp ts, Seq seq, const std::string& why) {
  SessionState from = s.state;
  if (!is_legal_transition(from, to))
    violated("illegal transition " + to_string(from) + " -> " + to_string(to) + " for " + s.session_id);
  s.state = to;
  if (!holds_node(to)) unbind(s);
  if (to == SessionState::Running) s.started_at = ts;
  if (is_terminal(to)) s.finished_at = ts;
  if (to == SessionState::Queued) s.finished_at.reset();
  if (to != SessionState::Running) s.at_barrier.reset();
  log_line(s.session_id, ts,
           "state " + to_string(from) + " -> " + to_string(to) + (why.empty() ? "" : " (" + why + ")"));
  if (on_transition) on_transition(s.session_id, from, to, seq);
}

void ControlState::apply(const LogRecord& r) {
  if (r.seq != applied_seq + 1)
    violated("record seq " + std::to_string(r.seq) + " applied after " + std::to_string(applied_seq));
  if (r.kind == rec::kNode) {
    apply_node(r);
  } else if (r.kind == rec::kUser) {
    apply_user(r);
  } else if (r.kind == rec::kDataset) {
    Dataset d = r.payload.at("dataset").get<Dataset>();
    if (datasets.count(d.dataset_id)) violated("duplicate dataset " + d.dataset_id);
    datasets[d.dataset_id] = std::move(d);
  } else if (r.kind == rec::kSession) {
    apply_session(r);
  } else if (r.kind == rec::kReport) {
    apply_report(r);
  } else if (r.kind == rec::kSubmission) {
    submissions.push_back(r.payload.at("submission").get<Submission>());
    ++next_submission;
  } else if (r.kind == rec::kNotify) {
    notifications.push_back(r.payload.at("notification").get<Notification>());
  } else if (r.kind == rec::kSweep) {
    apply_sweep(r);
  } else if (r.kind == rec::kScheduler) {
    auto e = r.payload.at("epoch").get<std::uint64_t>();
    if (e <= epoch) violated("epoch must increase");
    epoch = e;
  } else {
    violated("unknown record kind '" + r.kind + "'");
  }
  applied_seq = r.seq;
}

void ControlState::apply_node(const LogRecord& r) {
  auto op = op_of(r);
  if (op == "register") {
    if (nodes.count(r.id)) violated("duplicate node " + r.id);
    NodeRecord n;
    r.payload.at("total_gpus").get_to(n.total_gpus);
    r.payload.at("total_memory").get_to(n.total_memory);
    nodes[r.id] = std::move(n);
  } else if (op == "dead") {
    nodes.at(r.id).liveness = Liveness::Dead;
  } else {
    violated("unknown node op '" + op + "'");
  }
}

void ControlState::apply_user(const LogRecord& r) {
  auto op = op_of(r);
  if (op == "create") {
    UserAccount u = r.payload.at("account").get<UserAccount>();
    if (users.count(u.user_id)) violated("duplicate user " + u.user_id);
    users[u.user_id] = std::move(u);
    return;
  }
  auto& u = users.at(r.id);
  if (op == "set_credit") {
    u.credit_balance = r.payload.at("balance").get<std::int64_t>();
  } else if (op == "set_role") {
    u.role = r.payload.at("role").get<Role>();
  } else if (op == "set_team") {
    auto team = r.payload.at("team").get<std::string>();
    if (r.payload.at("member").get<bool>()) u.teams.insert(team);
    else u.teams.erase(team);
  } else if (op == "charge") {
    auto credits = r.payload.at("credits").get<std::int64_t>();
    auto& acc = usage[r.id];
    acc.gpu_ms += r.payload.value("gpu_ms", std::int64_t{0});
    acc.charged += credits;
    u.credit_balance = std::max<std::int64_t>(0, u.credit_balance - credits);
  } else {
    violated("unknown user op '" + op + "'");
  }
  if (u.credit_balance < 0) violated("negative credit balance for " + u.user_id);
}

void ControlState::apply_session(const LogRecord& r) {
  auto op = op_of(r);
  const auto& p = r.payload;
  if (op == "create" || op == "adopt") {
    Session s = p.at("session").get<Session>();
    if (sessions.count(s.session_id)) violated("duplicate session " + s.session_id);
    if (p.contains("seq_key")) {
      auto& last = session_seq[p.at("seq_key").get<std::string>()];
      last = std::max(last, p.at("seq").get<std::uint32_t>());
    }
    if (s.parent) lineage[s.session_id] = *s.parent;
    auto id = s.session_id;
    if (op == "adopt") {
      // Reconciled from a node agent: already running there.
      auto node = p.at("node").get<NodeId>();
      s.state = SessionState::Preparing;
      s.node_id.reset();
      auto& ref = sessions[id] = std::move(s);
      bind(ref, node, ref.resources.gpus, ref.resources.memory);
      log_line(id, r.ts, "adopted from node " + node);
    } else {
      if (s.state != SessionState::Queued) violated("sessions are created Queued");
      s.node_id.reset();
      sessions[id] = std::move(s);
      queue.push_back(id);
      log_line(id, r.ts, "created");
    }
    return;
  }

  auto it = sessions.find(r.id);
  if (it == sessions.end()) violated("unknown session " + r.id);
  Session& s = it->second;
  if (op == "bind") {
    if (s.state != SessionState::Queued) violated("bind of non-queued session " + s.session_id);
    auto qi = std::find(queue.begin(), queue.end(), s.session_id);
    if (qi != queue.end()) queue.erase(qi);
    auto node = p.at("node").get<NodeId>();
    bind(s, node, p.at("gpus").get<std::uint32_t>(), p.at("memory").get<Bytes>());
    transition(s, SessionState::Preparing, r.ts, r.seq, "bound to " + node);
  } else if (op == "transition") {
    auto to = p.at("to").get<SessionState>();
    auto from = s.state;
    if (from == SessionState::Queued) {
      auto qi = std::find(queue.begin(), queue.end(), s.session_id);
      if (qi != queue.end()) queue.erase(qi);
    }
    transition(s, to, r.ts, r.seq, p.value("reason", std::string()));
    if (to == SessionState::Queued) queue.push_front(s.session_id);
  } else if (op == "resume") {
    s.start_step = p.at("start_step").get<std::uint32_t>();
    transition(s, SessionState::Queued, r.ts, r.seq, "resume from step " + std::to_string(s.start_step));
    queue.push_back(s.session_id);
  } else if (op == "serve") {
    if (s.state != SessionState::Done) violated("serve of non-Done session " + s.session_id);
    auto node = p.at("node").get<NodeId>();
    bind(s, node, p.at("gpus").get<std::uint32_t>(), p.at("memory").get<Bytes>());
    s.serving_checkpoint = p.at("checkpoint").get<CheckpointId>();
    transition(s, SessionState::Serving, r.ts, r.seq, "serving " + *s.serving_checkpoint);
  } else if (op == "checkpoint") {
    add_checkpoint(s, p.at("checkpoint").get<Checkpoint>());
  } else if (op == "memo") {
    s.memos.push_back(p.at("text").get<std::string>());
    log_line(s.session_id, r.ts, "memo: " + s.memos.back());
  } else if (op == "reconfigure") {
    s.config = p.at("config").get<Config>();
    log_line(s.session_id, r.ts, "reconfigured from " + p.value("source", std::string("?")));
  } else if (op == "hold") {
    if (p.at("step").is_null()) s.hold_step.reset();
    else s.hold_step = p.at("step").get<std::uint32_t>();
    s.at_barrier.reset();
  } else if (op == "rm") {
    if (!is_terminal(s.state)) violated("rm of non-terminal session " + s.session_id);
    metrics.erase(s.session_id);
    logs.erase(s.session_id);
    sessions.erase(it);
  } else {
    violated("unknown session op '" + op + "'");
  }
}

void ControlState::apply_report(const LogRecord& r) {
  const auto& p = r.payload;
  auto rseq = p.at("rseq").get<Seq>();
  auto& last = node_report_seq[r.id];
  if (rseq <= last) violated("node report " + std::to_string(rseq) + " from " + r.id + " is not new");
  last = rseq;

  auto event = p.at("event").get<std::string>();
  auto ts = p.value("ts", r.ts);
  if (event == "fetch") {
    auto& n = nodes.at(r.id);
    auto ds = p.at("dataset").get<DatasetId>();
    if (p.value("cached", false)) {
      n.cached_datasets.insert(ds);
      n.cached_images.insert(p.at("image").get<ImageId>());
    }
    for (const auto& e : p.value("evicted", std::vector<DatasetId>{})) n.cached_datasets.erase(e);
    if (auto d = datasets.find(ds); d != datasets.end()) d->second.last_access = std::max(d->second.last_access, ts);
    return;
  }

  auto sid = p.at("session").get<SessionId>();
  auto it = sessions.find(sid);
  if (it == sessions.end() || it->second.node_id != r.id) return;  // stale
  Session& s = it->second;
  auto step = p.value("step", std::uint32_t{0});
  if (event == "running") {
    if (s.state == SessionState::Preparing) transition(s, SessionState::Running, ts, r.seq, "");
  } else if (event == "metric") {
    if (s.state != SessionState::Running) return;
    auto& evs = metrics[sid];
    for (const auto& m : p.at("metrics")) {
      evs.push_back({sid, step, m.at("name").get<std::string>(), m.at("value").get<double>(), ts});
    }
    s.last_step = std::max(s.last_step, step);
    if (p.contains("checkpoint")) add_checkpoint(s, p.at("checkpoint").get<Checkpoint>());
  } else if (event == "barrier") {
    if (s.state == SessionState::Running) s.at_barrier = step;
  } else if (event == "done") {
    if (s.state == SessionState::Running) transition(s, SessionState::Done, ts, r.seq, "completed");
  } else if (event == "failed") {
    if (s.state == SessionState::Running)
      transition(s, SessionState::Failed, ts, r.seq, "workload failed at step " + std::to_string(step));
  } else if (event == "lost") {
    if (s.state == SessionState::Preparing) {
      transition(s, SessionState::Queued, ts, r.seq, "node could not host the session");
      queue.push_front(sid);
    }
  } else if (event == "oom") {
    if (s.state == SessionState::Running)
      transition(s, SessionState::KilledOom, ts, r.seq, "memory limit exceeded at step " + std::to_string(step));
  } else {
    violated("unknown report event '" + event + "'");
  }
}

void ControlState::apply_sweep(const LogRecord& r) {
  auto op = op_of(r);
  const auto& p = r.payload;
  if (op == "create") {
    SweepRecord w = p.at("sweep").get<SweepRecord>();
    if (sweeps.count(w.sweep_id)) violated("duplicate sweep " + w.sweep_id);
    sweeps[w.sweep_id] = std::move(w);
    ++next_sweep;
    return;
  }
  auto& w = sweeps.at(r.id);
  if (op == "member") {
    w.members.push_back(p.at("session").get<SessionId>());
  } else if (op == "rejected") {
    ++w.rejected;
  } else if (op == "generation") {
    w.generation = p.at("generation").get<std::uint32_t>();
    for (const auto& t : p.at("trace")) w.trace.push_back(t);
  } else {
    violated("unknown sweep op '" + op + "'");
  }
}

Json ControlState::to_json() const {
  Json j;
  j["nodes"] = nodes;
  j["sessions"] = sessions;
  j["bindings"] = bindings;
  j["queue"] = queue;
  j["session_seq"] = session_seq;
  j["lineage"] = lineage;
  j["datasets"] = datasets;
  j["users"] = users;
  j["usage"] = usage;
  j["metrics"] = metrics;
  j["logs"] = logs;
  j["submissions"] = submissions;
  j["notifications"] = notifications;
  j["sweeps"] = sweeps;
  j["node_report_seq"] = node_report_seq;
  j["epoch"] = epoch;
  j["next_checkpoint"] = next_checkpoint;
  j["next_submission"] = next_submission;
  j["next_sweep"] = next_sweep;
  j["applied_seq"] = applied_seq;
  return j;
}

ControlState ControlState::from_json(const Json& j) {
  ControlState s;
  j.at("nodes").get_to(s.nodes);
  j.at("sessions").get_to(s.sessions);
  j.at("bindings").get_to(s.bindings);
  j.at("queue").get_to(s.queue);
  j.at("session_seq").get_to(s.session_seq);
  j.at("lineage").get_to(s.lineage);
  j.at("datasets").get_to(s.datasets);
  j.at("users").get_to(s.users);
  j.at("usage").get_to(s.usage);
  j.at("metrics").get_to(s.metrics);
  j.at("logs").get_to(s.logs);
  j.at("submissions").get_to(s.submissions);
  j.at("notifications").get_to(s.notifications);
  j.at("sweeps").get_to(s.sweeps);
  j.at("node_report_seq").get_to(s.node_report_seq);
  j.at("epoch").get_to(s.epoch);
  j.at("next_checkpoint").get_to(s.next_checkpoint);
  j.at("next_submission").get_to(s.next_submission);
  j.at("next_sweep").get_to(s.next_sweep);
  j.at("applied_seq").get_to(s.applied_seq);
  return s;
}

std::string ControlState::digest() const { return sha256_hex(to_json().dump()); }

NodeDescriptor ControlState::node_descriptor(const NodeId& id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw Error(ErrorCode::NotFound, "unknown node " + id);
  const auto& n = it->second;
  NodeDescriptor d;
  d.node_id = id;
  d.total_gpus = n.total_gpus;
  d.available_gpus = n.total_gpus - n.bound_gpus;
  d.total_memory = n.total_memory;
  d.available_memory = n.total_memory - n.bound_memory;
  d.cached_datasets = n.cached_datasets;
  d.cached_images = n.cached_images;
  d.liveness = n.liveness;
  return d;
}

std::vector<NodeDescriptor> ControlState::node_descriptors(bool alive_only) const {
  std::vector<NodeDescriptor> out;
  for (const auto& [id, n] : nodes) {
    if (alive_only && n.liveness != Liveness::Alive) continue;
    out.push_back(node_descriptor(id));
  }
  return out;
}

const Session& ControlState::session(const SessionId& id) const {
  auto it = sessions.find(id);
  if (it == sessions.end()) throw Error(ErrorCode::NotFound, "unknown session " + id);
  return it->second;
}

const Dataset& ControlState::dataset(const DatasetId& id) const {
  auto it = datasets.find(id);
  if (it == datasets.end()) throw Error(ErrorCode::NotFound, "unknown dataset " + id);
  return it->second;
}

const UserAccount& ControlState::user(const UserId& id) const {
  auto it = users.find(id);
  if (it == users.end()) throw Error(ErrorCode::NotFound, "unknown user " + id);
  return it->second;
}

ControlState rebuild(const std::vector<LogRecord>& records, TransitionObserver observer) {
  ControlState s;
  s.on_transition = std::move(observer);
  for (const auto& r : records) s.apply(r);
  s.on_transition = nullptr;
  return s;
}

Seq Journal::commit(std::string kind, std::string id, Json payload) {
  // Apply to a scratch copy of the record first so a violating record never
  // reaches the log.
  LogRecord probe{log_.max_seq() + 1, kind, id, clock_.now(), payload};
  state_.apply(probe);
  Seq seq = log_.append(std::move(kind), std::move(id), probe.ts, std::move(payload));
  return seq;
}

}  // namespace deskml
