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

#include "deskml/platform.hpp"

#include <spdlog/spdlog.h>

#include "deskml/error.hpp"

namespace deskml {

namespace {

constexpr int kPrioFault = 0;
constexpr int kPrioMessage = 1;
constexpr int kPrioTick = 2;

constexpr const char* kPrimaryAlias = "scheduler-primary";

AgentCommand halt_of(const NodeId& node, const SessionId& sid) {
  AgentCommand c;
  c.kind = AgentCommand::Kind::Halt;
  c.node = node;
  c.session = sid;
  return c;
}

}  // namespace

class Platform::Env final : public AgentEnv {
 public:
  explicit Env(Platform& p) : p_(p) {}

  Timestamp now() const override { return p_.now(); }
  void schedule(Timestamp at, std::function<void()> fn) override { p_.schedule(at, kPrioMessage, std::move(fn)); }

  void send_report(const NodeId& node, const Json& report) override {
    for (std::size_t i = 0; i < p_.slots_.size(); ++i) {
      p_.send(node, p_.slots_[i].replica->name(), [this, i, node, report] {
        auto& s = p_.slots_[i];
        if (p_.is_primary(s)) p_.on_report(s, node, report);
      });
    }
  }

  void send_heartbeat(const NodeId& node, Timestamp) override {
    for (std::size_t i = 0; i < p_.slots_.size(); ++i) {
      p_.send(node, p_.slots_[i].replica->name(), [this, i, node] {
        auto& s = p_.slots_[i];
        if (p_.is_primary(s)) p_.on_node_heartbeat(s, node);
      });
    }
  }

  void send_reconcile(const NodeId& node, std::uint64_t epoch, const Json& body) override {
    for (std::size_t i = 0; i < p_.slots_.size(); ++i) {
      p_.send(node, p_.slots_[i].replica->name(), [this, i, node, epoch, body] {
        auto& s = p_.slots_[i];
        if (p_.is_primary(s) && s.replica->epoch() == epoch) p_.on_reconcile(s, node, body);
      });
    }
  }

  void record_telemetry(const TelemetrySample& sample) override { p_.telemetry_.append(sample); }

 private:
  Platform& p_;
};

Platform::Platform(Scenario scenario, PlatformOptions opts) : scenario_(std::move(scenario)), opts_(std::move(opts)) {
  validate(scenario_.sim);
  for (const auto& [name, w] : scenario_.workloads) validate(w);
  env_ = std::make_unique<Env>(*this);
  bootstrap();
}

Platform::~Platform() = default;

const WorkloadProfile& Platform::workload(const std::string& name) const {
  auto it = scenario_.workloads.find(name);
  if (it == scenario_.workloads.end()) throw Error(ErrorCode::NotFound, "unknown workload '" + name + "'");
  return it->second;
}

void Platform::schedule(Timestamp at, int prio, std::function<void()> fn) {
  events_.push(Event{std::max(at, now()), prio, next_event_++, std::move(fn)});
}

void Platform::send(const std::string& from, const std::string& to, std::function<void()> fn) {
  Duration extra = 0;
  for (const auto& d : delays_)
    if (d.endpoint == from && now() >= d.from && now() < d.until) extra = std::max(extra, d.delay);
  auto& tail = link_tail_[{from, to}];
  Timestamp at = std::max(now() + extra, tail);
  tail = at;
  schedule(at, kPrioMessage, std::move(fn));
}

bool Platform::is_primary(const Slot& s) const {
  return s.replica->alive() && s.replica->role() == SchedulerRole::Primary;
}

Platform::Slot& Platform::acting() {
  Slot* best = nullptr;
  for (auto& s : slots_)
    if (is_primary(s) && (!best || s.replica->epoch() > best->replica->epoch())) best = &s;
  if (!best) throw Error(ErrorCode::Unavailable, "no scheduler primary is up");
  return *best;
}

const Platform::Slot& Platform::acting() const { return const_cast<Platform*>(this)->acting(); }

Platform::Slot* Platform::slot_by_name(const std::string& name) {
  for (auto& s : slots_)
    if (s.replica->name() == name) return &s;
  return nullptr;
}

std::optional<std::string> Platform::primary_name() const {
  std::lock_guard lock(mu_);
  try {
    return acting().replica->name();
  } catch (const Error&) {
    return std::nullopt;
  }
}

bool Platform::reconciling() const {
  std::lock_guard lock(mu_);
  try {
    return acting().reconciling;
  } catch (const Error&) {
    return false;
  }
}

void Platform::reset_manager(Slot& s) {
  s.manager.reset();
  s.scheduler = std::make_unique<Scheduler>(opts_.scheduler);
  s.manager = std::make_unique<SessionManager>(*s.journal, *s.scheduler, scenario_.sim);
  s.reconciling = false;
  s.reconciled.clear();
  s.pending.clear();
  s.durable.clear();
  s.node_seen.clear();
}

void Platform::bootstrap() {
  const auto& sim = scenario_.sim;
  FailoverConfig fc{sim.heartbeat_interval, sim.failover_timeout};
  std::vector<std::string> names{"scheduler-a"};
  if (sim.standby) names.push_back("scheduler-b");
  if (opts_.data_dir) std::filesystem::create_directories(*opts_.data_dir);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::optional<std::filesystem::path> path;
    if (opts_.data_dir) path = *opts_.data_dir / (names[i] + ".log");
    Slot s;
    s.replica = std::make_unique<Replica>(names[i], i == 0 ? SchedulerRole::Primary : SchedulerRole::Secondary, fc,
                                          path);
    s.journal = std::make_unique<Journal>(s.replica->log(), s.replica->state(), clock_);
    slots_.push_back(std::move(s));
  }

  auto& p = slots_.front();
  bool restart = p.replica->log().max_seq() > 0;
  std::uint64_t epoch = restart ? p.replica->state().epoch + 1 : 1;
  p.replica->assume_primary(epoch);
  reset_manager(p);
  p.journal->commit(rec::kScheduler, p.replica->name(), Json{{"epoch", epoch}});
  if (slots_.size() > 1) slots_[1].replica->demote(epoch, now());
  if (restart) spdlog::info("{} restarted from {} records in epoch {}", p.replica->name(), p.replica->log().max_seq(), epoch);

  auto& reg = p.manager->registry();
  const auto& st = p.replica->state();
  std::set<NodeId> seen;
  for (std::size_t i = 0; i < scenario_.nodes.size(); ++i)
    if (!seen.insert(scenario_.nodes[i].id.value_or("node-" + std::to_string(i + 1))).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate node id in scenario");
  for (std::size_t i = 0; i < scenario_.nodes.size(); ++i) {
    const auto& spec = scenario_.nodes[i];
    NodeId id = spec.id.value_or("node-" + std::to_string(i + 1));
    if (!st.nodes.count(id))
      p.journal->commit(rec::kNode, id,
                        Json{{"op", "register"}, {"total_gpus", spec.gpus}, {"total_memory", spec.memory}});
    agents_[id] = std::make_unique<NodeAgent>(id, spec.gpus, spec.memory, sim, *env_);
  }
  for (const auto& u : scenario_.users)
    if (!st.users.count(u.id)) reg.create_user(u.id, u.role, u.credit, u.teams);
  for (const auto& d : scenario_.datasets) {
    if (st.datasets.count(d.id)) continue;
    reg.push_dataset(d.owner, d.id, d.size, d.team ? Visibility::TeamPrivate(*d.team) : Visibility::Public(), d.metric,
                     d.order);
  }
  stats_.epoch_primaries[epoch].insert(p.replica->name());

  for (auto& [id, a] : agents_) a->start();
  begin_reconcile(p);

  for (std::size_t i = 0; i < slots_.size(); ++i) {
    schedule(now(), kPrioMessage, [this, i] { replica_heartbeat(i); });
    schedule(now() + sim.tick, kPrioTick, [this, i] { scheduler_tick(i); });
    if (i > 0) schedule(now() + sim.failover_timeout + 1, kPrioMessage, [this, i] { failover_check(i); });
  }
  for (const auto& f : scenario_.faults) schedule(f.at, kPrioFault, [this, f] { inject(f); });
  for (std::size_t i = 0; i < scenario_.jobs.size(); ++i)
    schedule(scenario_.jobs[i].at, kPrioMessage, [this, i] { submit_job(i); });
}

void Platform::note_acting(Slot& s, Seq before) {
  if (s.replica->log().max_seq() > before) stats_.epoch_primaries[s.replica->epoch()].insert(s.replica->name());
}

void Platform::finish_call(Slot& s, Effects fx, Seq before) {
  note_acting(s, before);
  apply_effects(s, std::move(fx));
  drain(s);
}

void Platform::apply_effects(Slot& s, Effects fx) {
  auto epoch = s.replica->epoch();
  for (auto& cmd : fx.commands) {
    ++stats_.commands;
    auto node = cmd.node;
    send(s.replica->name(), node, [this, epoch, cmd = std::move(cmd)]() mutable {
      auto it = agents_.find(cmd.node);
      if (it == agents_.end()) return;
      auto& a = *it->second;
      switch (cmd.kind) {
        case AgentCommand::Kind::Launch:
          cmd.launch.epoch = epoch;
          a.launch(cmd.launch);
          break;
        case AgentCommand::Kind::Halt:
          a.halt(epoch, cmd.session);
          break;
        case AgentCommand::Kind::Update:
          a.update(epoch, cmd.session, cmd.config, cmd.hold_step, cmd.release);
          break;
        case AgentCommand::Kind::Resync:
          a.resync(epoch, cmd.last_rseq);
          break;
      }
    });
  }
  for (const auto& n : fx.notifications) notifier_.notify(n, epoch);
}

void Platform::drain(Slot& s) {
  if (!is_primary(s) || s.reconciling) return;
  auto before = s.replica->log().max_seq();
  auto fx = s.manager->drain();
  note_acting(s, before);
  apply_effects(s, std::move(fx));
}

void Platform::replica_heartbeat(std::size_t i) {
  auto& s = slots_[i];
  if (!s.replica->alive()) return;
  schedule(now() + s.replica->config().heartbeat_interval, kPrioMessage, [this, i] { replica_heartbeat(i); });
  if (slots_.size() < 2) return;
  std::size_t j = 1 - i;
  auto msg = s.replica->make_heartbeat(now());
  send(s.replica->name(), slots_[j].replica->name(), [this, i, j, msg] {
    auto& peer = slots_[j];
    if (!peer.replica->alive()) return;
    bool was_primary = is_primary(peer);
    auto fetch = [&msg](Seq from, Seq to) {
      std::vector<LogRecord> out;
      for (const auto& r : msg.records)
        if (r.seq >= from && r.seq <= to) out.push_back(r);
      return out;
    };
    auto ack = peer.replica->record_heartbeat(msg, now(), fetch);
    if (was_primary && !is_primary(peer)) reset_manager(peer);
    if (ack.accepted && msg.role == SchedulerRole::Primary && peer.replica->role() == SchedulerRole::Secondary) {
      auto at = std::max(now(), peer.replica->last_primary_heartbeat() + peer.replica->config().failover_timeout + 1);
      schedule(at, kPrioMessage, [this, j] { failover_check(j); });
    }
    send(peer.replica->name(), slots_[i].replica->name(), [this, i, ack] {
      auto& self = slots_[i];
      if (!self.replica->alive()) return;
      bool was = is_primary(self);
      self.replica->record_ack(ack, now());
      if (was && !is_primary(self)) reset_manager(self);
    });
  });
}

void Platform::failover_check(std::size_t i) {
  auto& s = slots_[i];
  if (!s.replica->alive() || s.replica->role() != SchedulerRole::Secondary) return;
  if (auto ev = s.replica->failover_check(now())) promote(s, *ev);
}

void Platform::promote(Slot& s, const PromotionEvent& ev) {
  stats_.promotions.push_back(ev);
  reset_manager(s);
  auto before = s.replica->log().max_seq();
  s.journal->commit(rec::kScheduler, s.replica->name(), Json{{"epoch", s.replica->epoch()}});
  note_acting(s, before);
  s.manager->reset_charge_clock(now());
  begin_reconcile(s);
  // Jobs acknowledged by the old primary but never replicated are resent;
  // the request id keeps a resend from creating a second session.
  for (const auto& [index, sid] : job_sessions_) {
    bool known = false;
    for (const auto& [id, sess] : s.replica->state().sessions)
      if (sess.request_id == "job-" + std::to_string(index)) known = true;
    if (!known) schedule(now(), kPrioMessage, [this, i = index] { submit_job(i); });
  }
}

void Platform::begin_reconcile(Slot& s) {
  const auto& st = s.replica->state();
  s.reconciling = true;
  s.reconcile_deadline = now() + scenario_.sim.failover_timeout;
  s.reconciled.clear();
  auto max_seq = s.replica->log().max_seq();
  auto epoch = s.replica->epoch();
  for (const auto& [id, n] : st.nodes) {
    s.node_seen[id] = now();
    Seq last = 0;
    if (auto it = st.node_report_seq.find(id); it != st.node_report_seq.end()) last = it->second;
    s.pending[id].assign(1, {max_seq, last});
    if (n.liveness != Liveness::Alive) continue;
    send(s.replica->name(), id, [this, id, epoch, last] {
      if (auto a = agents_.find(id); a != agents_.end()) a->second->announce(epoch, last);
    });
  }
  finish_reconcile_if_done(s);
}

void Platform::finish_reconcile_if_done(Slot& s) {
  if (!s.reconciling) return;
  bool all = true;
  for (const auto& [id, n] : s.replica->state().nodes)
    if (n.liveness == Liveness::Alive && !s.reconciled.count(id)) all = false;
  if (!all && now() < s.reconcile_deadline) return;
  s.reconciling = false;
  if (!all) spdlog::warn("{}: reconciliation deadline passed with nodes missing", s.replica->name());
  drain(s);
}

Seq Platform::durable_rseq(Slot& s, const NodeId& node) {
  // Without a live standby the local log is all the durability there is.
  bool peer_gone = slots_.size() < 2 || now() - s.replica->last_peer_seen() > scenario_.sim.failover_timeout;
  Seq watermark = peer_gone ? s.replica->log().max_seq() : s.replica->peer_watermark();
  auto& q = s.pending[node];
  auto& d = s.durable[node];
  while (!q.empty() && q.front().first <= watermark) {
    d = std::max(d, q.front().second);
    q.pop_front();
  }
  return d;
}

void Platform::on_report(Slot& s, const NodeId& node, const Json& report) {
  ++stats_.reports;
  auto before = s.replica->log().max_seq();
  auto fx = s.manager->ingest_report(node, report);
  if (s.replica->log().max_seq() > before) s.pending[node].emplace_back(before + 1, report.at("rseq").get<Seq>());
  note_acting(s, before);
  apply_effects(s, std::move(fx));
  drain(s);
}

void Platform::on_node_heartbeat(Slot& s, const NodeId& node) {
  s.node_seen[node] = now();
  auto durable = durable_rseq(s, node);
  auto epoch = s.replica->epoch();
  send(s.replica->name(), node, [this, node, epoch, durable] {
    if (auto a = agents_.find(node); a != agents_.end()) a->second->heartbeat_ack(epoch, durable);
  });
}

void Platform::on_reconcile(Slot& s, const NodeId& node, const Json& body) {
  ++stats_.reconciles;
  const auto& st = s.replica->state();
  if (!st.nodes.count(node)) return;
  auto before = s.replica->log().max_seq();
  Effects fx;
  bool dead = st.nodes.at(node).liveness == Liveness::Dead;
  std::set<SessionId> hosted;
  std::vector<Json> unknown;
  // A session the new primary just bound may already be past the reports
  // that would have moved it along; catch it up to what the node says.
  auto settle = [&](const SessionId& sid, const std::string& phase) {
    if (phase != "running" && phase != "held") return;
    s.journal->commit(rec::kSession, sid,
                      Json{{"op", "transition"}, {"to", SessionState::Running}, {"reason", "reconciled while running"}});
    if (phase == "held") {
      // Its barrier bookkeeping did not survive; let it run to completion.
      AgentCommand c;
      c.kind = AgentCommand::Kind::Update;
      c.node = node;
      c.session = sid;
      c.hold_step = 0;
      c.release = true;
      fx.commands.push_back(std::move(c));
    }
  };

  for (const auto& h : body.at("hosted")) {
    auto hs = h.at("session").get<Session>();
    const auto& sid = hs.session_id;
    hosted.insert(sid);
    auto it = st.sessions.find(sid);
    if (dead) {
      fx.commands.push_back(halt_of(node, sid));
    } else if (it == st.sessions.end()) {
      unknown.push_back(h);
    } else if (it->second.created_at != hs.created_at || it->second.seed != hs.seed) {
      spdlog::warn("{}: {} hosted on {} is an orphan of a lost epoch; its id was reissued, halting it",
                   s.replica->name(), sid, node);
      fx.commands.push_back(halt_of(node, sid));
    } else if (it->second.state == SessionState::Queued && h.at("phase") != "serving") {
      auto nd = st.node_descriptor(node);
      if (nd.available_gpus >= it->second.resources.gpus && nd.available_memory >= it->second.resources.memory) {
        s.scheduler->bind(*s.journal, sid, node);
        settle(sid, h.at("phase").get<std::string>());
      } else {
        fx.commands.push_back(halt_of(node, sid));
      }
    } else if (!(it->second.node_id == node && holds_node(it->second.state))) {
      fx.commands.push_back(halt_of(node, sid));
    }
  }

  for (const auto& r : body.at("reports")) {
    auto seq0 = s.replica->log().max_seq();
    fx.merge(s.manager->ingest_report(node, r));
    if (s.replica->log().max_seq() > seq0) s.pending[node].emplace_back(seq0 + 1, r.at("rseq").get<Seq>());
  }

  for (const auto& h : unknown) {
    auto hs = h.at("session").get<Session>();
    auto phase = h.at("phase").get<std::string>();
    auto nd = st.node_descriptor(node);
    if (phase == "serving" || nd.available_gpus < hs.resources.gpus || nd.available_memory < hs.resources.memory) {
      fx.commands.push_back(halt_of(node, hs.session_id));
      continue;
    }
    hs.last_step = std::max(hs.last_step, h.at("step").get<std::uint32_t>());
    Json payload{{"op", "adopt"}, {"session", hs}, {"node", node}};
    auto cut = hs.session_id.rfind('/');
    if (cut != std::string::npos) {
      try {
        payload["seq"] = static_cast<std::uint32_t>(std::stoul(hs.session_id.substr(cut + 1)));
        payload["seq_key"] = hs.session_id.substr(0, cut);
      } catch (const std::exception&) {
        payload.erase("seq");
      }
    }
    s.journal->commit(rec::kSession, hs.session_id, payload);
    spdlog::info("{}: adopted {} from {}", s.replica->name(), hs.session_id, node);
    settle(hs.session_id, phase);
  }

  if (!dead) {
    for (const auto& [sid, b] : st.bindings) {
      if (b.node != node || hosted.count(sid)) continue;
      const auto& sess = st.session(sid);
      AgentCommand c;
      c.kind = AgentCommand::Kind::Launch;
      c.node = node;
      c.session = sid;
      c.launch = s.manager->launch_for(sid);
      if (sess.state == SessionState::Running && !sess.checkpoints.empty())
        c.launch.session.start_step = std::max(sess.start_step, sess.checkpoints.back().step);
      fx.commands.push_back(std::move(c));
    }
  }

  s.reconciled.insert(node);
  note_acting(s, before);
  apply_effects(s, std::move(fx));
  finish_reconcile_if_done(s);
}

void Platform::scheduler_tick(std::size_t i) {
  auto& s = slots_[i];
  if (!s.replica->alive()) return;
  schedule(now() + scenario_.sim.tick, kPrioTick, [this, i] { scheduler_tick(i); });
  if (!is_primary(s)) return;
  auto before = s.replica->log().max_seq();
  Effects fx;
  std::vector<NodeId> silent;
  for (const auto& [id, n] : s.replica->state().nodes) {
    if (n.liveness != Liveness::Alive) continue;
    auto seen = s.node_seen.try_emplace(id, now()).first->second;
    if (now() - seen > scenario_.sim.failover_timeout) silent.push_back(id);
  }
  for (const auto& id : silent) {
    auto ms = now() - s.node_seen[id];
    spdlog::warn("{}: no heartbeat from {} for {} ms, declaring it dead", s.replica->name(), id, ms);
    fx.merge(s.manager->node_dead(id, "no heartbeat for " + std::to_string(ms) + " ms"));
  }
  fx.merge(s.manager->charge_tick());
  fx.merge(s.manager->sweep_tick());
  note_acting(s, before);
  apply_effects(s, std::move(fx));
  finish_reconcile_if_done(s);
  drain(s);
}

void Platform::inject(const FaultSpec& f) {
  switch (f.kind) {
    case FaultKind::CrashNode:
    case FaultKind::CrashPrimary:
      crash(f.target);
      break;
    case FaultKind::NetworkDelay: {
      std::string endpoint = f.target;
      if (endpoint == kPrimaryAlias) {
        auto name = primary_name();
        if (!name) return;
        endpoint = *name;
      }
      spdlog::info("delaying messages from {} by {} ms for {} ms", endpoint, f.delay, f.window);
      delays_.push_back({endpoint, now(), now() + f.window, f.delay});
      break;
    }
  }
}

void Platform::crash(const std::string& target) {
  std::lock_guard lock(mu_);
  std::string name = target;
  if (name == kPrimaryAlias) {
    auto p = primary_name();
    if (!p) return;
    name = *p;
  }
  if (auto a = agents_.find(name); a != agents_.end()) {
    a->second->crash();
  } else if (auto* s = slot_by_name(name)) {
    s->replica->crash();
  } else {
    throw Error(ErrorCode::NotFound, "unknown crash target '" + target + "'");
  }
  spdlog::info("{} crashed at t={}", name, now());
  stats_.crashed_at[name] = now();
}

void Platform::submit_job(std::size_t index) {
  const auto& job = scenario_.jobs[index];
  RunRequest req;
  req.user = job.user;
  req.dataset = job.dataset;
  req.image = job.image;
  req.config = job.config;
  req.gpus = job.gpus;
  req.memory = job.memory;
  req.seed = job.seed;
  req.request_id = "job-" + std::to_string(index);
  try {
    req.profile = workload(job.workload);
    job_sessions_[index] = with_primary([&](SessionManager& sm, Effects&) { return sm.run(req); });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Unavailable) {
      // Clients retry while no primary is reachable.
      schedule(now() + scenario_.sim.heartbeat_interval, kPrioMessage, [this, index] { submit_job(index); });
      return;
    }
    ++stats_.jobs_rejected;
    spdlog::warn("job {} of {} rejected: {}", index, job.user, e.what());
  }
}

void Platform::advance_to(Timestamp t) {
  std::lock_guard lock(mu_);
  while (!events_.empty() && events_.top().at <= t) {
    Event ev = std::move(const_cast<Event&>(events_.top()));
    events_.pop();
    if (ev.at > now()) clock_.set(ev.at);
    ev.fn();
  }
  if (t > now()) clock_.set(t);
}

bool Platform::run_until(const std::function<bool()>& done, Timestamp limit, Duration step) {
  while (now() < limit) {
    if (done()) return true;
    advance_to(std::min(now() + step, limit));
  }
  return done();
}

const NodeAgent& Platform::agent(const NodeId& id) const {
  auto it = agents_.find(id);
  if (it == agents_.end()) throw Error(ErrorCode::NotFound, "unknown node " + id);
  return *it->second;
}

std::vector<NodeId> Platform::node_ids() const {
  std::vector<NodeId> out;
  for (const auto& [id, a] : agents_) out.push_back(id);
  return out;
}

PlatformStats Platform::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::optional<SessionId> Platform::job_session(std::size_t index) const {
  std::lock_guard lock(mu_);
  auto it = job_sessions_.find(index);
  if (it == job_sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<LogRecord> Platform::log_range(Seq from, Seq to) const {
  std::lock_guard lock(mu_);
  return acting().replica->log().range(from, to);
}

}  // namespace deskml
