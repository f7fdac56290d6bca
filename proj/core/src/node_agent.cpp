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

#include "deskml/node_agent.hpp"

#include <spdlog/spdlog.h>

#include "deskml/workload.hpp"

namespace deskml {

std::string to_string(NodeAgent::Phase p) {
  switch (p) {
    case NodeAgent::Phase::Fetching:
      return "fetching";
    case NodeAgent::Phase::Running:
      return "running";
    case NodeAgent::Phase::Held:
      return "held";
    case NodeAgent::Phase::Serving:
      return "serving";
  }
  return "?";
}

NodeAgent::NodeAgent(NodeId id, std::uint32_t gpus, Bytes memory, const SimConfig& cfg, AgentEnv& env)
    : id_(std::move(id)), total_gpus_(gpus), total_memory_(memory), cfg_(cfg), env_(env), gpu_owner_(gpus) {}

void NodeAgent::start() {
  env_.schedule(env_.now(), [this] { heartbeat_tick(); });
  env_.schedule(env_.now(), [this] { telemetry_tick(); });
}

void NodeAgent::crash() {
  alive_ = false;
  hosted_.clear();
  std::fill(gpu_owner_.begin(), gpu_owner_.end(), std::nullopt);
  cache_.clear();
  images_.clear();
}

std::uint32_t NodeAgent::free_gpus() const {
  return static_cast<std::uint32_t>(std::count(gpu_owner_.begin(), gpu_owner_.end(), std::nullopt));
}

Bytes NodeAgent::free_memory() const {
  Bytes used = 0;
  for (const auto& [sid, h] : hosted_) used += h.session.resources.memory;
  return total_memory_ - used;
}

std::optional<NodeAgent::Phase> NodeAgent::phase(const SessionId& session) const {
  auto it = hosted_.find(session);
  if (it == hosted_.end()) return std::nullopt;
  return it->second.phase;
}

std::vector<SessionId> NodeAgent::hosted() const {
  std::vector<SessionId> out;
  for (const auto& [sid, h] : hosted_) out.push_back(sid);
  return out;
}

std::set<DatasetId> NodeAgent::cached_datasets() const {
  std::set<DatasetId> out;
  for (const auto& [ds, e] : cache_) out.insert(ds);
  return out;
}

bool NodeAgent::fenced(std::uint64_t epoch, const char* what) {
  if (epoch < epoch_) {
    spdlog::debug("{}: ignoring {} from epoch {} (current {})", id_, what, epoch, epoch_);
    return true;
  }
  epoch_ = epoch;
  return false;
}

void NodeAgent::report(Json body) {
  body["rseq"] = next_rseq_++;
  if (!body.contains("ts")) body["ts"] = env_.now();
  outbox_.push_back(body);
  env_.send_report(id_, body);
}

void NodeAgent::launch(const LaunchCommand& cmd) {
  if (!alive_ || fenced(cmd.epoch, "launch")) return;
  const auto& s = cmd.session;
  if (hosted_.count(s.session_id)) return;
  if (free_gpus() < s.resources.gpus || free_memory() < s.resources.memory) {
    spdlog::warn("{}: cannot host {}: insufficient capacity", id_, s.session_id);
    report(Json{{"event", "lost"}, {"session", s.session_id}});
    return;
  }
  Hosted h;
  h.session = s;
  h.step = s.start_step;
  h.suppress_through = std::max(s.last_step, s.start_step);
  h.key = run_key(s.dataset_id, s.image_id, s.config);
  h.oom_at = oom_step(s.profile, s.resources.memory);
  h.token = next_token_++;
  for (std::uint32_t i = 0; i < total_gpus_ && h.gpu_indices.size() < s.resources.gpus; ++i) {
    if (!gpu_owner_[i]) {
      gpu_owner_[i] = s.session_id;
      h.gpu_indices.push_back(i);
    }
  }
  if (cmd.serve) {
    h.phase = Phase::Serving;
    hosted_[s.session_id] = std::move(h);
    return;
  }

  h.phase = Phase::Fetching;
  Duration delay = 0;
  auto cached = cache_.find(s.dataset_id);
  if (cfg_.caching && cached != cache_.end()) {
    cached->second.last_access = env_.now();
  } else {
    // size / bandwidth, rounded up to whole milliseconds
    delay = static_cast<Duration>((cmd.dataset_size * 1000 + cfg_.bandwidth - 1) / cfg_.bandwidth);
    copy_time_total_ += delay;
    ++copies_;
  }
  auto token = h.token;
  auto sid = s.session_id;
  hosted_[sid] = std::move(h);
  env_.schedule(env_.now() + delay, [this, sid, token, size = cmd.dataset_size] {
    auto it = hosted_.find(sid);
    if (!alive_ || it == hosted_.end() || it->second.token != token) return;
    std::vector<DatasetId> evicted;
    if (cfg_.caching) evicted = admit_to_cache(it->second.session.dataset_id, size);
    images_.insert(it->second.session.image_id);
    report(Json{{"event", "fetch"},
                {"session", sid},
                {"dataset", it->second.session.dataset_id},
                {"image", it->second.session.image_id},
                {"cached", cfg_.caching},
                {"evicted", evicted}});
    on_fetched(sid, token);
  });
}

std::vector<DatasetId> NodeAgent::admit_to_cache(const DatasetId& ds, Bytes size) {
  cache_[ds] = {size, env_.now()};
  std::vector<DatasetId> evicted;
  if (!cfg_.cache_capacity) return evicted;
  auto total = [&] {
    Bytes t = 0;
    for (const auto& [id, e] : cache_) t += e.size;
    return t;
  };
  std::set<DatasetId> in_use;
  for (const auto& [sid, h] : hosted_) in_use.insert(h.session.dataset_id);
  while (total() > *cfg_.cache_capacity) {
    auto victim = cache_.end();
    for (auto it = cache_.begin(); it != cache_.end(); ++it) {
      if (it->first == ds || in_use.count(it->first)) continue;
      if (victim == cache_.end() || it->second.last_access < victim->second.last_access) victim = it;
    }
    if (victim == cache_.end()) break;
    evicted.push_back(victim->first);
    cache_.erase(victim);
  }
  return evicted;
}

void NodeAgent::on_fetched(const SessionId& sid, std::uint64_t token) {
  auto& h = hosted_.at(sid);
  if (h.token != token) return;
  h.phase = Phase::Running;
  report(Json{{"event", "running"}, {"session", sid}});
  schedule_step(h);
}

void NodeAgent::schedule_step(Hosted& h) {
  auto sid = h.session.session_id;
  auto token = h.token;
  env_.schedule(env_.now() + h.session.profile.step_duration, [this, sid, token] { on_step(sid, token); });
}

void NodeAgent::on_step(const SessionId& sid, std::uint64_t token) {
  auto it = hosted_.find(sid);
  if (!alive_ || it == hosted_.end() || it->second.token != token || it->second.phase != Phase::Running) return;
  auto& h = it->second;
  const auto& prof = h.session.profile;
  std::uint32_t s = ++h.step;

  if (prof.failure_at && s == *prof.failure_at) {
    report(Json{{"event", "failed"}, {"session", sid}, {"step", s}});
    release(sid);
    return;
  }
  if (h.oom_at && s == *h.oom_at) {
    report(Json{{"event", "oom"}, {"session", sid}, {"step", s}, {"memory", memory_usage(prof, s)}});
    release(sid);
    return;
  }
  if (s > h.suppress_through) {
    Json body{{"event", "metric"},
              {"session", sid},
              {"step", s},
              {"metrics", Json::array({Json{{"name", prof.metric_name},
                                            {"value", metric_value(prof, h.session.config, h.session.seed, h.key, s)}}})}};
    bool at_hold = h.session.hold_step && s == *h.session.hold_step;
    if (s % cfg_.checkpoint_interval == 0 || s == prof.steps_total || at_hold) {
      Checkpoint c;
      c.step = s;
      c.digest = checkpoint_digest(h.session.seed, h.session.config, s);
      c.curve_value = curve_value(prof, h.session.config, s);
      c.created_at = env_.now();
      body["checkpoint"] = c;
    }
    report(std::move(body));
  }
  if (s >= prof.steps_total) {
    report(Json{{"event", "done"}, {"session", sid}, {"step", s}});
    release(sid);
  } else if (h.session.hold_step && s == *h.session.hold_step) {
    h.phase = Phase::Held;
    report(Json{{"event", "barrier"}, {"session", sid}, {"step", s}});
  } else {
    schedule_step(h);
  }
}

void NodeAgent::release(const SessionId& sid) {
  for (auto& owner : gpu_owner_)
    if (owner == sid) owner.reset();
  hosted_.erase(sid);
}

void NodeAgent::halt(std::uint64_t epoch, const SessionId& session) {
  if (!alive_ || fenced(epoch, "halt")) return;
  release(session);
}

void NodeAgent::update(std::uint64_t epoch, const SessionId& session, const std::optional<Config>& config,
                       std::optional<std::uint32_t> hold_step, bool release_hold) {
  if (!alive_ || fenced(epoch, "update")) return;
  auto it = hosted_.find(session);
  if (it == hosted_.end()) return;
  auto& h = it->second;
  if (config) {
    h.session.config = *config;
    h.key = run_key(h.session.dataset_id, h.session.image_id, h.session.config);
  }
  if (hold_step) {
    if (*hold_step == 0) h.session.hold_step.reset();
    else h.session.hold_step = *hold_step;
  }
  if (release_hold && h.phase == Phase::Held) {
    h.phase = Phase::Running;
    h.token = next_token_++;
    schedule_step(h);
  }
}

void NodeAgent::announce(std::uint64_t epoch, Seq last_rseq) {
  if (!alive_ || fenced(epoch, "announce")) return;
  while (!outbox_.empty() && outbox_.front().at("rseq").get<Seq>() <= last_rseq) outbox_.pop_front();
  Json hosted = Json::array();
  for (const auto& [sid, h] : hosted_) {
    hosted.push_back(Json{{"session", h.session}, {"phase", to_string(h.phase)}, {"step", h.step}});
  }
  Json reports = Json::array();
  for (const auto& r : outbox_) reports.push_back(r);
  env_.send_reconcile(id_, epoch, Json{{"hosted", hosted}, {"reports", reports}});
}

void NodeAgent::heartbeat_ack(std::uint64_t epoch, Seq durable_rseq) {
  if (!alive_ || fenced(epoch, "heartbeat ack")) return;
  while (!outbox_.empty() && outbox_.front().at("rseq").get<Seq>() <= durable_rseq) outbox_.pop_front();
}

void NodeAgent::resync(std::uint64_t epoch, Seq last_rseq) {
  if (!alive_ || fenced(epoch, "resync")) return;
  for (const auto& r : outbox_)
    if (r.at("rseq").get<Seq>() > last_rseq) env_.send_report(id_, r);
}

void NodeAgent::heartbeat_tick() {
  if (!alive_) return;
  env_.send_heartbeat(id_, env_.now());
  env_.schedule(env_.now() + cfg_.heartbeat_interval, [this] { heartbeat_tick(); });
}

void NodeAgent::telemetry_tick() {
  if (!alive_) return;
  auto now = env_.now();
  for (std::uint32_t i = 0; i < total_gpus_; ++i) {
    TelemetrySample s;
    s.node_id = id_;
    s.gpu_index = i;
    s.timestamp = now;
    if (const auto& owner = gpu_owner_[i]) {
      const auto& h = hosted_.at(*owner);
      s.session_id = *owner;
      if (h.phase == Phase::Running) {
        s.utilization_pct = utilization_at(h.session.profile, h.step + 1);
        s.memory_used = memory_usage(h.session.profile, h.step) / std::max<std::size_t>(1, h.gpu_indices.size());
      }
    }
    env_.record_telemetry(s);
  }
  env_.schedule(now + cfg_.telemetry_period, [this] { telemetry_tick(); });
}

}  // namespace deskml
