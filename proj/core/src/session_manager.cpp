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

#include "deskml/session_manager.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "deskml/error.hpp"
#include "deskml/workload.hpp"

namespace deskml {

namespace {

[[noreturn]] void state_error(const Session& s, const std::string& action) {
  throw Error(ErrorCode::StateError,
              "cannot " + action + " session " + s.session_id + " in state " + to_string(s.state));
}

AgentCommand halt_command(const NodeId& node, const SessionId& id) {
  AgentCommand c;
  c.kind = AgentCommand::Kind::Halt;
  c.node = node;
  c.session = id;
  return c;
}

}  // namespace

void Effects::merge(Effects&& other) {
  for (auto& c : other.commands) commands.push_back(std::move(c));
  for (auto& n : other.notifications) notifications.push_back(std::move(n));
}

void to_json(Json& j, const CompareResult& v) {
  Json cells = Json::array();
  for (const auto& row : v.cells) {
    Json r = Json::array();
    for (const auto& c : row) r.push_back(c ? Json(*c) : Json(nullptr));
    cells.push_back(r);
  }
  j = Json{{"common_args", v.common}, {"columns", v.columns}, {"rows", v.rows}, {"exclusive_args", cells}};
}

void to_json(Json& j, const LeaderboardEntry& v) {
  j = Json{{"rank", v.rank},       {"user", v.user},
           {"score", v.score},     {"session_id", v.session},
           {"submission_id", v.submission_id}, {"timestamp", v.timestamp}};
}

void to_json(Json& j, const Leaderboard& v) {
  j = Json{{"dataset", v.dataset}, {"metric_name", v.metric_name}, {"order", v.order}, {"entries", v.entries},
           {"history", v.history}};
}

void to_json(Json& j, const SweepLaunch& v) {
  j = Json{{"sweep_id", v.sweep_id}, {"sessions", v.sessions}, {"rejected", v.rejected}};
}

void to_json(Json& j, const SweepBest& v) {
  j = Json{{"session_id", v.session}, {"checkpoint_id", v.checkpoint}, {"score", v.score}};
}

void to_json(Json& j, const InferResult& v) {
  j = Json{{"session_id", v.session},   {"checkpoint_id", v.checkpoint}, {"output", v.output},
           {"latency_ms", v.latency_ms}, {"requests", v.requests},       {"total_latency_ms", v.total_latency_ms}};
}

std::vector<Config> expand_sweep(const SweepSpec& spec) {
  validate(spec);
  std::vector<Config> out;
  if (spec.strategy == SweepStrategy::Grid) {
    std::vector<std::pair<std::string, const SpaceAxis*>> axes;
    std::size_t total = 1;
    for (const auto& [name, axis] : spec.space) {
      axes.emplace_back(name, &axis);
      total *= axis.values.size();
    }
    for (std::size_t idx = 0; idx < total; ++idx) {
      Config c = spec.base_config;
      std::size_t rem = idx;
      for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
        const auto& values = it->second->values;
        c[it->first] = values[rem % values.size()];
        rem /= values.size();
      }
      out.push_back(std::move(c));
    }
    return out;
  }
  std::uint32_t count = spec.strategy == SweepStrategy::Random ? spec.n : spec.population;
  CounterRng rng(spec.seed);
  for (std::uint32_t i = 0; i < count; ++i) {
    Config c = spec.base_config;
    for (const auto& [name, axis] : spec.space) {
      if (axis.is_list()) {
        c[name] = axis.values[rng.below(axis.values.size())];
      } else {
        double u = rng.uniform();
        double lo = *axis.lo, hi = *axis.hi;
        c[name] = axis.log_scale ? std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo))) : lo + u * (hi - lo);
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

Config perturb_config(const Config& source, const SweepSpec& spec, CounterRng& rng, Json& factors) {
  Config c = source;
  factors = Json::object();
  for (const auto& [name, axis] : spec.space) {
    auto it = c.find(name);
    if (it == c.end() || !numeric_value(it->second)) continue;
    double f = spec.perturb_factors[rng.below(spec.perturb_factors.size())];
    if (auto* i = std::get_if<std::int64_t>(&it->second)) {
      auto scaled = static_cast<std::int64_t>(std::llround(static_cast<double>(*i) * f));
      *i = (*i >= 1 && scaled < 1) ? 1 : scaled;
    } else {
      it->second = std::get<double>(it->second) * f;
    }
    factors[name] = f;
  }
  return c;
}

std::uint32_t pbt_interval(const SweepSpec& spec) { return std::max<std::uint32_t>(1, spec.profile.steps_total / 10); }

SessionManager::SessionManager(Journal& journal, Scheduler& scheduler, const SimConfig& cfg)
    : journal_(journal), scheduler_(scheduler), registry_(journal), cfg_(cfg), last_charge_(journal.now()) {}

std::uint64_t SessionManager::fresh_seed(const SessionId& id) const { return mix64(fnv1a64(id) ^ cfg_.seed); }

const Session& SessionManager::visible(const UserId& caller, const SessionId& id) const {
  const auto& s = journal_.state().session(id);
  if (!registry_.can_view_session(caller, s))
    throw Error(ErrorCode::PermissionDenied, caller + " may not access session " + id);
  return s;
}

const Session& SessionManager::get(const UserId& caller, const SessionId& id) const { return visible(caller, id); }

Notification SessionManager::notify(const Session& s, NotificationKind kind, const std::string& detail) {
  Notification n{s.owner, s.session_id, kind, detail, s.finished_at.value_or(journal_.now())};
  journal_.commit(rec::kNotify, s.session_id, Json{{"notification", n}});
  return n;
}

SessionId SessionManager::run(const RunRequest& req) {
  if (req.request_id) {
    for (const auto& [id, s] : journal_.state().sessions)
      if (s.owner == req.user && s.request_id == req.request_id) return id;
  }
  validate(req.profile);
  ResourceRequest r{req.gpus, req.memory, req.dataset, req.image};
  validate(r);
  auto decision = scheduler_.admit(journal_, req.user, r);
  if (!decision.accepted) throw AdmissionRejected(decision.reason);
  const auto& st = journal_.state();
  if (req.team && !st.user(req.user).teams.count(*req.team))
    throw Error(ErrorCode::PermissionDenied, req.user + " is not a member of team " + *req.team);

  std::string key = req.user + "/" + req.dataset;
  std::uint32_t seq = 1;
  if (auto it = st.session_seq.find(key); it != st.session_seq.end()) seq = it->second + 1;
  Session s;
  s.session_id = key + "/" + std::to_string(seq);
  s.owner = req.user;
  s.team = req.team;
  s.dataset_id = req.dataset;
  s.image_id = req.image;
  s.config = req.config;
  s.resources = r;
  s.seed = req.seed.value_or(fresh_seed(s.session_id));
  s.created_at = journal_.now();
  s.profile = req.profile;
  s.sweep_id = req.sweep_id;
  s.hold_step = req.hold_step;
  s.request_id = req.request_id;
  journal_.commit(rec::kSession, s.session_id, Json{{"op", "create"}, {"session", s}, {"seq_key", key}, {"seq", seq}});
  return s.session_id;
}

void SessionManager::safe_stop(const Session& s, const std::string& reason, Effects& fx, bool notify_owner) {
  auto id = s.session_id;
  auto node = s.node_id;
  if (s.state == SessionState::Running && (s.checkpoints.empty() || s.checkpoints.back().step != s.last_step)) {
    Checkpoint c;
    c.step = s.last_step;
    c.digest = checkpoint_digest(s.seed, s.config, s.last_step);
    c.curve_value = curve_value(s.profile, s.config, s.last_step);
    c.created_at = journal_.now();
    journal_.commit(rec::kSession, id, Json{{"op", "checkpoint"}, {"checkpoint", c}});
  }
  journal_.commit(rec::kSession, id, Json{{"op", "transition"}, {"to", SessionState::Stopped}, {"reason", reason}});
  if (node) fx.commands.push_back(halt_command(*node, id));
  if (notify_owner) fx.notifications.push_back(notify(journal_.state().session(id), NotificationKind::CreditStop, reason));
}

SessionState SessionManager::stop(const UserId& caller, const SessionId& id, Effects& fx) {
  const auto& s = visible(caller, id);
  switch (s.state) {
    case SessionState::Queued:
    case SessionState::Preparing:
    case SessionState::Running:
    case SessionState::Serving:
      safe_stop(s, "stopped by " + caller, fx, false);
      return SessionState::Stopped;
    default:
      state_error(s, "stop");
  }
}

void SessionManager::rm(const UserId& caller, const SessionId& id) {
  const auto& s = visible(caller, id);
  if (!is_terminal(s.state)) state_error(s, "rm");
  journal_.commit(rec::kSession, id, Json{{"op", "rm"}});
}

SessionState SessionManager::resume(const UserId& caller, const SessionId& id) {
  const auto& s = visible(caller, id);
  if (s.state != SessionState::Stopped && s.state != SessionState::Failed) state_error(s, "resume");
  if (s.checkpoints.empty())
    throw Error(ErrorCode::StateError, "cannot resume session " + id + ": it has no checkpoint");
  auto decision = scheduler_.admit(journal_, s.owner, s.resources);
  if (!decision.accepted) throw AdmissionRejected(decision.reason);
  journal_.commit(rec::kSession, id, Json{{"op", "resume"}, {"start_step", s.checkpoints.back().step}});
  return SessionState::Queued;
}

SessionId SessionManager::fork(const UserId& caller, const SessionId& id, const Config& overrides,
                               std::optional<std::uint64_t> seed) {
  const auto& p = visible(caller, id);
  if (p.checkpoints.empty() && !is_terminal(p.state))
    throw Error(ErrorCode::StateError,
                "cannot fork session " + id + " in state " + to_string(p.state) + ": it has no checkpoint yet");
  for (const auto& [k, v] : overrides)
    if (!p.config.count(k)) throw Error(ErrorCode::InvalidArgument, "fork override names unknown parameter '" + k + "'");

  RunRequest req;
  req.user = caller;
  req.dataset = p.dataset_id;
  req.image = p.image_id;
  req.config = p.config;
  for (const auto& [k, v] : overrides) req.config[k] = v;
  req.gpus = p.resources.gpus;
  req.memory = p.resources.memory;
  req.profile = p.profile;
  req.seed = seed;
  const auto& st = journal_.state();
  if (p.team && st.user(caller).teams.count(*p.team)) req.team = p.team;

  ResourceRequest r{req.gpus, req.memory, req.dataset, req.image};
  auto decision = scheduler_.admit(journal_, caller, r);
  if (!decision.accepted) throw AdmissionRejected(decision.reason);

  std::string key = caller + "/" + p.dataset_id;
  std::uint32_t seq = 1;
  if (auto it = st.session_seq.find(key); it != st.session_seq.end()) seq = it->second + 1;
  Session c;
  c.session_id = key + "/" + std::to_string(seq);
  c.owner = caller;
  c.team = req.team;
  c.dataset_id = req.dataset;
  c.image_id = req.image;
  c.config = req.config;
  c.resources = r;
  c.parent = p.session_id;
  c.seed = seed.value_or(fresh_seed(c.session_id));
  c.created_at = journal_.now();
  c.profile = p.profile;
  if (!p.checkpoints.empty()) {
    c.start_step = p.checkpoints.back().step;
    c.last_step = c.start_step;
  }
  journal_.commit(rec::kSession, c.session_id, Json{{"op", "create"}, {"session", c}, {"seq_key", key}, {"seq", seq}});
  return c.session_id;
}

std::vector<Session> SessionManager::list(const UserId& caller, const std::optional<UserId>& owner,
                                          const std::optional<SessionState>& state) const {
  journal_.state().user(caller);
  std::vector<Session> out;
  for (const auto& [id, s] : journal_.state().sessions) {
    if (owner && s.owner != *owner) continue;
    if (state && s.state != *state) continue;
    if (!registry_.can_view_session(caller, s)) continue;
    out.push_back(s);
  }
  return out;
}

std::vector<MetricEvent> SessionManager::events(const UserId& caller, const SessionId& id,
                                                const std::optional<std::string>& name) const {
  visible(caller, id);
  std::vector<MetricEvent> out;
  const auto& all = journal_.state().metrics;
  if (auto it = all.find(id); it != all.end()) {
    for (const auto& e : it->second)
      if (!name || e.name == *name) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(), [](const MetricEvent& a, const MetricEvent& b) {
    return std::tie(a.step, a.name) < std::tie(b.step, b.name);
  });
  return out;
}

std::vector<LogLine> SessionManager::logs(const UserId& caller, const SessionId& id) const {
  visible(caller, id);
  const auto& all = journal_.state().logs;
  auto it = all.find(id);
  return it == all.end() ? std::vector<LogLine>{} : it->second;
}

std::vector<Checkpoint> SessionManager::checkpoints(const UserId& caller, const SessionId& id) const {
  return visible(caller, id).checkpoints;
}

CompareResult SessionManager::compare(const UserId& caller, const std::vector<SessionId>& ids) const {
  if (ids.size() < 2) throw Error(ErrorCode::InvalidArgument, "compare needs at least two sessions");
  std::vector<const Session*> sessions;
  for (const auto& id : ids) sessions.push_back(&visible(caller, id));
  std::set<std::string> keys;
  for (const auto* s : sessions)
    for (const auto& [k, v] : s->config) keys.insert(k);
  CompareResult out;
  for (const auto& k : keys) {
    bool common = true;
    for (const auto* s : sessions) {
      auto it = s->config.find(k);
      if (it == s->config.end() || it->second != sessions.front()->config.at(k)) {
        common = false;
        break;
      }
    }
    if (common) out.common[k] = sessions.front()->config.at(k);
    else out.columns.push_back(k);
  }
  for (const auto* s : sessions) {
    out.rows.push_back(s->session_id);
    std::vector<std::optional<ConfigValue>> row;
    for (const auto& k : out.columns) {
      auto it = s->config.find(k);
      row.push_back(it == s->config.end() ? std::nullopt : std::optional<ConfigValue>(it->second));
    }
    out.cells.push_back(std::move(row));
  }
  return out;
}

void SessionManager::memo(const UserId& caller, const SessionId& id, const std::string& text) {
  visible(caller, id);
  if (text.empty()) throw Error(ErrorCode::InvalidArgument, "memo text is empty");
  journal_.commit(rec::kSession, id, Json{{"op", "memo"}, {"text", text}});
}

const Checkpoint& SessionManager::pick_checkpoint(const Session& s, const std::optional<CheckpointId>& id) const {
  if (s.checkpoints.empty())
    throw Error(ErrorCode::StateError, "session " + s.session_id + " has no checkpoint");
  if (!id) return s.checkpoints.back();
  for (const auto& c : s.checkpoints)
    if (c.checkpoint_id == *id) return c;
  throw Error(ErrorCode::NotFound, "session " + s.session_id + " has no checkpoint " + *id);
}

Submission SessionManager::submit(const UserId& caller, const SessionId& id,
                                  const std::optional<CheckpointId>& checkpoint) {
  const auto& s = visible(caller, id);
  const auto& c = pick_checkpoint(s, checkpoint);
  const auto& st = journal_.state();
  const auto& d = st.dataset(s.dataset_id);
  Submission sub;
  sub.submission_id = "s" + std::to_string(st.next_submission);
  sub.session_id = id;
  sub.user = s.owner;
  sub.dataset_id = d.dataset_id;
  sub.checkpoint_id = c.checkpoint_id;
  sub.metric_name = d.metric_name;
  sub.order = d.order;
  sub.score = evaluation_score(d.dataset_id, d.order, c);
  sub.timestamp = journal_.now();
  journal_.commit(rec::kSubmission, sub.submission_id, Json{{"submission", sub}});
  return sub;
}

Leaderboard SessionManager::leaderboard(const UserId& caller, const DatasetId& dataset) const {
  const auto& d = journal_.state().dataset(dataset);
  if (!registry_.can_read(caller, d))
    throw Error(ErrorCode::PermissionDenied, caller + " may not read dataset " + dataset);
  Leaderboard lb;
  lb.dataset = dataset;
  lb.metric_name = d.metric_name;
  lb.order = d.order;
  std::map<UserId, const Submission*> best;
  for (const auto& s : journal_.state().submissions) {
    if (s.dataset_id != dataset) continue;
    lb.history[s.user].push_back(s);
    auto& b = best[s.user];
    if (!b || better(d.order, s.score, b->score) ||
        (s.score == b->score && std::tie(s.timestamp, s.submission_id) < std::tie(b->timestamp, b->submission_id)))
      b = &s;
  }
  for (auto& [user, subs] : lb.history) {
    std::stable_sort(subs.begin(), subs.end(),
                     [](const Submission& a, const Submission& b) { return a.timestamp < b.timestamp; });
  }
  for (const auto& [user, s] : best) lb.entries.push_back({0, user, s->score, s->session_id, s->submission_id, s->timestamp});
  std::sort(lb.entries.begin(), lb.entries.end(), [&](const LeaderboardEntry& a, const LeaderboardEntry& b) {
    if (a.score != b.score) return better(d.order, a.score, b.score);
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.user < b.user;
  });
  for (std::size_t i = 0; i < lb.entries.size(); ++i) lb.entries[i].rank = static_cast<std::uint32_t>(i + 1);
  return lb;
}

SweepLaunch SessionManager::sweep(const UserId& caller, const SweepSpec& spec) {
  auto configs = expand_sweep(spec);
  ResourceRequest r{spec.gpus, spec.memory, spec.dataset_id, spec.image_id};
  validate(r);
  auto decision = scheduler_.admit(journal_, caller, r);
  if (!decision.accepted) throw AdmissionRejected(decision.reason);

  SweepRecord w;
  w.sweep_id = "w" + std::to_string(journal_.state().next_sweep);
  w.owner = caller;
  w.spec = spec;
  journal_.commit(rec::kSweep, w.sweep_id, Json{{"op", "create"}, {"sweep", w}});

  SweepLaunch out;
  out.sweep_id = w.sweep_id;
  auto interval = pbt_interval(spec);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    RunRequest req;
    req.user = caller;
    req.dataset = spec.dataset_id;
    req.image = spec.image_id;
    req.config = configs[i];
    req.gpus = spec.gpus;
    req.memory = spec.memory;
    req.profile = spec.profile;
    req.seed = mix64(spec.seed + i + 1);
    req.sweep_id = w.sweep_id;
    if (spec.strategy == SweepStrategy::Pbt && interval < spec.profile.steps_total) req.hold_step = interval;
    try {
      auto id = run(req);
      journal_.commit(rec::kSweep, w.sweep_id, Json{{"op", "member"}, {"session", id}});
      out.sessions.push_back(id);
    } catch (const AdmissionRejected& e) {
      if (e.reason() != "CreditExhausted") throw;
      for (std::size_t j = i; j < configs.size(); ++j)
        journal_.commit(rec::kSweep, w.sweep_id, Json{{"op", "rejected"}});
      out.rejected = static_cast<std::uint32_t>(configs.size() - i);
      break;
    }
  }
  return out;
}

const SweepRecord& SessionManager::sweep_status(const UserId& caller, const std::string& id) const {
  const auto& st = journal_.state();
  auto it = st.sweeps.find(id);
  if (it == st.sweeps.end()) throw Error(ErrorCode::NotFound, "unknown sweep " + id);
  if (it->second.owner != caller && !registry_.can_read(caller, st.dataset(it->second.spec.dataset_id)))
    throw Error(ErrorCode::PermissionDenied, caller + " may not access sweep " + id);
  return it->second;
}

SweepBest SessionManager::sweep_best(const UserId& caller, const std::string& id) const {
  const auto& w = sweep_status(caller, id);
  const auto& st = journal_.state();
  const auto& d = st.dataset(w.spec.dataset_id);
  std::optional<SweepBest> best;
  for (const auto& m : w.members) {
    auto it = st.sessions.find(m);
    if (it == st.sessions.end() || it->second.checkpoints.empty()) continue;
    const auto& c = it->second.checkpoints.back();
    double score = evaluation_score(d.dataset_id, d.order, c);
    if (!best || better(d.order, score, best->score)) best = SweepBest{m, c.checkpoint_id, score};
  }
  if (!best) throw Error(ErrorCode::StateError, "no member of sweep " + id + " has a checkpoint yet");
  return *best;
}

NodeId SessionManager::serve(const UserId& caller, const SessionId& id, const std::optional<CheckpointId>& checkpoint,
                             Effects& fx) {
  const auto& s = visible(caller, id);
  if (s.state != SessionState::Done) state_error(s, "serve");
  const auto& c = pick_checkpoint(s, checkpoint);
  auto nodes = journal_.state().node_descriptors(true);
  auto node = scheduler_.choose(s.resources, nodes);
  if (!node) throw Error(ErrorCode::Unavailable, "no node can host session " + id + " for serving right now");
  journal_.commit(rec::kSession, id,
                  Json{{"op", "serve"},
                       {"node", *node},
                       {"gpus", s.resources.gpus},
                       {"memory", s.resources.memory},
                       {"checkpoint", c.checkpoint_id}});
  AgentCommand cmd;
  cmd.kind = AgentCommand::Kind::Launch;
  cmd.node = *node;
  cmd.session = id;
  cmd.launch = launch_for(id);
  fx.commands.push_back(std::move(cmd));
  return *node;
}

InferResult SessionManager::infer(const UserId& caller, const SessionId& id, const Json& payload) {
  const auto& s = visible(caller, id);
  if (s.state != SessionState::Serving) state_error(s, "infer on");
  const Checkpoint* ckpt = nullptr;
  for (const auto& c : s.checkpoints)
    if (c.checkpoint_id == s.serving_checkpoint) ckpt = &c;
  if (!ckpt) throw Error(ErrorCode::Invariant, "serving checkpoint of " + id + " is missing");
  InferResult r;
  r.session = id;
  r.checkpoint = ckpt->checkpoint_id;
  r.output = infer_output(ckpt->digest, payload);
  // Modeled cost: fixed overhead plus 1 ms per KiB of payload.
  r.latency_ms = 5 + static_cast<Duration>(payload.dump().size() / 1024);
  auto& stats = serving_stats_[id];
  ++stats.first;
  stats.second += r.latency_ms;
  r.requests = stats.first;
  r.total_latency_ms = stats.second;
  return r;
}

Effects SessionManager::ingest_report(const NodeId& node, const Json& report) {
  Effects fx;
  const auto& st = journal_.state();
  auto n = st.nodes.find(node);
  if (n == st.nodes.end()) return fx;
  auto rseq = report.at("rseq").get<Seq>();
  Seq last = 0;
  if (auto it = st.node_report_seq.find(node); it != st.node_report_seq.end()) last = it->second;
  if (rseq <= last) return fx;
  if (rseq > last + 1) {
    AgentCommand c;
    c.kind = AgentCommand::Kind::Resync;
    c.node = node;
    c.last_rseq = last;
    fx.commands.push_back(std::move(c));
    return fx;
  }
  auto sid = report.value("session", std::string());
  std::optional<SessionState> before;
  if (auto it = st.sessions.find(sid); it != st.sessions.end()) before = it->second.state;
  journal_.commit(rec::kReport, node, report);

  if (n->second.liveness == Liveness::Dead && !sid.empty() && report.at("event") != "fetch") {
    // A node declared dead is still talking; whatever it runs is no longer ours.
    fx.commands.push_back(halt_command(node, sid));
    return fx;
  }
  auto it = st.sessions.find(sid);
  if (!before || it == st.sessions.end() || it->second.state == *before) return fx;
  const auto& s = it->second;
  if (s.state == SessionState::Failed) {
    fx.notifications.push_back(notify(s, NotificationKind::Failed, "workload failed at step " +
                                                                       std::to_string(report.value("step", 0))));
  } else if (s.state == SessionState::KilledOom) {
    fx.notifications.push_back(notify(s, NotificationKind::KilledOom, "memory limit exceeded at step " +
                                                                          std::to_string(report.value("step", 0))));
  }
  return fx;
}

Effects SessionManager::node_dead(const NodeId& node, const std::string& why) {
  Effects fx;
  const auto& st = journal_.state();
  auto n = st.nodes.find(node);
  if (n == st.nodes.end() || n->second.liveness == Liveness::Dead) return fx;
  journal_.commit(rec::kNode, node, Json{{"op", "dead"}, {"reason", why}});
  std::vector<SessionId> bound;
  for (const auto& [sid, b] : st.bindings)
    if (b.node == node) bound.push_back(sid);
  for (const auto& sid : bound) {
    const auto& s = st.session(sid);
    if (s.state == SessionState::Preparing) {
      journal_.commit(rec::kSession, sid,
                      Json{{"op", "transition"}, {"to", SessionState::Queued}, {"reason", "node " + node + " lost during setup"}});
    } else {
      journal_.commit(rec::kSession, sid,
                      Json{{"op", "transition"}, {"to", SessionState::Failed}, {"reason", "node " + node + " died"}});
      fx.notifications.push_back(notify(st.session(sid), NotificationKind::NodeDead, "node " + node + " died: " + why));
    }
  }
  return fx;
}

Effects SessionManager::charge_tick() {
  Effects fx;
  auto now = journal_.now();
  auto prev = last_charge_;
  last_charge_ = now;
  if (now <= prev) return fx;
  const auto& st = journal_.state();
  std::map<UserId, std::int64_t> usage;
  for (const auto& [id, s] : st.sessions) {
    if (s.state != SessionState::Running || s.resources.gpus == 0) continue;
    auto start = std::max(prev, s.started_at.value_or(prev));
    if (now > start) usage[s.owner] += static_cast<std::int64_t>(s.resources.gpus) * (now - start);
  }
  for (const auto& [user, ms] : usage) {
    auto res = registry_.charge_usage(user, ms, cfg_.credits_per_gpu_minute);
    if (res.balance > 0) continue;
    std::vector<SessionId> victims;
    for (const auto& [id, s] : st.sessions) {
      if (s.owner != user) continue;
      if (s.state == SessionState::Queued || s.state == SessionState::Preparing || s.state == SessionState::Running)
        victims.push_back(id);
    }
    for (const auto& id : victims) safe_stop(st.session(id), "credit exhausted", fx, true);
    if (!victims.empty()) spdlog::info("credit of {} exhausted; safe-stopped {} session(s)", user, victims.size());
  }
  return fx;
}

Effects SessionManager::sweep_tick() {
  Effects fx;
  const auto& st = journal_.state();
  std::vector<std::string> pbt;
  for (const auto& [id, w] : st.sweeps)
    if (w.spec.strategy == SweepStrategy::Pbt) pbt.push_back(id);

  for (const auto& wid : pbt) {
    const SweepSpec spec = st.sweeps.at(wid).spec;
    const auto members = st.sweeps.at(wid).members;
    const auto generation = st.sweeps.at(wid).generation;
    auto interval = pbt_interval(spec);
    std::uint32_t barrier = (generation + 1) * interval;
    if (barrier >= spec.profile.steps_total) continue;

    std::vector<SessionId> live;
    bool ready = true;
    for (const auto& m : members) {
      auto it = st.sessions.find(m);
      if (it == st.sessions.end()) continue;
      const auto& s = it->second;
      if (is_terminal(s.state) || s.state == SessionState::Serving) continue;
      live.push_back(m);
      if (s.state != SessionState::Running || s.at_barrier != barrier) ready = false;
    }
    if (live.empty() || !ready) continue;

    const auto& d = st.dataset(spec.dataset_id);
    std::vector<std::pair<double, SessionId>> ranked;
    for (const auto& m : live) {
      const auto& s = st.session(m);
      double score = s.checkpoints.empty() ? (d.order == MetricOrder::Ascending ? 1e300 : -1e300)
                                           : evaluation_score(d.dataset_id, d.order, s.checkpoints.back());
      ranked.emplace_back(score, m);
    }
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return better(d.order, a.first, b.first);
      return a.second < b.second;
    });
    auto quota = static_cast<std::size_t>(std::floor(spec.population * spec.truncation_fraction));
    std::size_t k = std::min(std::max<std::size_t>(1, quota), live.size() / 2);

    CounterRng rng(mix64(spec.seed ^ (0x9e3779b97f4a7c15ULL * (generation + 1))));
    Json trace = Json::array();
    std::map<SessionId, Config> reconfigured;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& loser = ranked[ranked.size() - 1 - i];
      const auto& source = ranked[rng.below(k)];
      const auto& src = st.session(source.second);
      Json factors;
      Config cfg = perturb_config(src.config, spec, rng, factors);
      Config old = st.session(loser.second).config;
      journal_.commit(rec::kSession, loser.second, Json{{"op", "reconfigure"}, {"config", cfg}, {"source", source.second}});
      if (!src.checkpoints.empty()) {
        Checkpoint c = src.checkpoints.back();
        c.created_at = journal_.now();
        journal_.commit(rec::kSession, loser.second, Json{{"op", "checkpoint"}, {"checkpoint", c}});
      }
      trace.push_back(Json{{"generation", generation + 1},
                           {"step", barrier},
                           {"member", loser.second},
                           {"member_score", loser.first},
                           {"source", source.second},
                           {"source_score", source.first},
                           {"factors", factors},
                           {"old_config", old},
                           {"source_config", src.config},
                           {"new_config", cfg}});
      reconfigured[loser.second] = std::move(cfg);
    }
    std::uint32_t next = barrier + interval;
    std::uint32_t hold = next < spec.profile.steps_total ? next : 0;
    for (const auto& m : live) {
      journal_.commit(rec::kSession, m, Json{{"op", "hold"}, {"step", hold ? Json(hold) : Json(nullptr)}});
      AgentCommand c;
      c.kind = AgentCommand::Kind::Update;
      c.node = *st.session(m).node_id;
      c.session = m;
      if (auto it = reconfigured.find(m); it != reconfigured.end()) c.config = it->second;
      c.hold_step = hold;
      c.release = true;
      fx.commands.push_back(std::move(c));
    }
    journal_.commit(rec::kSweep, wid, Json{{"op", "generation"}, {"generation", generation + 1}, {"trace", trace}});
  }
  return fx;
}

Effects SessionManager::drain() {
  Effects fx;
  for (const auto& [id, node] : scheduler_.drain_queue(journal_)) {
    AgentCommand c;
    c.kind = AgentCommand::Kind::Launch;
    c.node = node;
    c.session = id;
    c.launch = launch_for(id);
    fx.commands.push_back(std::move(c));
  }
  return fx;
}

LaunchCommand SessionManager::launch_for(const SessionId& id) const {
  const auto& st = journal_.state();
  const auto& s = st.session(id);
  LaunchCommand cmd;
  cmd.session = s;
  if (auto d = st.datasets.find(s.dataset_id); d != st.datasets.end()) cmd.dataset_size = d->second.size;
  cmd.serve = s.state == SessionState::Serving;
  return cmd;
}

}  // namespace deskml
