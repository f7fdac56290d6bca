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

#include "deskml/types.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "deskml/error.hpp"
#include "json_util.hpp"

namespace deskml {

namespace {

using detail::get_opt;
using detail::get_or;
using detail::put_opt;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

}  // namespace

const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::PermissionDenied: return "permission_denied";
    case ErrorCode::Unauthenticated: return "unauthenticated";
    case ErrorCode::StateError: return "state_error";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::Rejected: return "rejected";
    case ErrorCode::Unavailable: return "unavailable";
    case ErrorCode::Persistence: return "persistence";
    case ErrorCode::Corrupt: return "corrupt";
    case ErrorCode::Invariant: return "invariant";
  }
  return "unknown";
}

std::string to_string(SessionState s) { return Json(s).get<std::string>(); }
std::string to_string(MetricOrder o) { return Json(o).get<std::string>(); }
std::string to_string(NotificationKind k) { return Json(k).get<std::string>(); }

SessionState session_state_from_string(const std::string& s) {
  for (auto st : {SessionState::Queued, SessionState::Preparing, SessionState::Running,
                  SessionState::Done, SessionState::Failed, SessionState::Stopped,
                  SessionState::KilledOom, SessionState::Serving}) {
    if (to_string(st) == s) return st;
  }
  invalid("unknown session state '" + s + "'");
}

bool is_terminal(SessionState s) {
  return s == SessionState::Done || s == SessionState::Failed || s == SessionState::Stopped ||
         s == SessionState::KilledOom;
}

bool holds_node(SessionState s) {
  return s == SessionState::Preparing || s == SessionState::Running || s == SessionState::Serving;
}

std::string format_config_value(const ConfigValue& v) {
  if (auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  // Shortest round-tripping representation, same as the JSON dump.
  return Json(std::get<double>(v)).dump();
}

ConfigValue parse_config_value(const std::string& text) {
  std::int64_t i = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
  if (ec == std::errc() && p == text.data() + text.size() && !text.empty()) return i;
  try {
    std::size_t used = 0;
    double d = std::stod(text, &used);
    if (used == text.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  return text;
}

std::optional<double> numeric_value(const ConfigValue& v) {
  if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

void to_json(Json& j, const ConfigValue& v) {
  std::visit([&j](const auto& x) { j = x; }, v);
}

void from_json(const Json& j, ConfigValue& v) {
  if (j.is_number_integer()) v = j.get<std::int64_t>();
  else if (j.is_number()) v = j.get<double>();
  else if (j.is_string()) v = j.get<std::string>();
  else invalid("config values must be numbers or strings");
}

void to_json(Json& j, const ResourceRequest& v) {
  j = Json{{"gpus", v.gpus}, {"memory", v.memory}, {"dataset_id", v.dataset_id}, {"image_id", v.image_id}};
}

void from_json(const Json& j, ResourceRequest& v) {
  get_or(j, "gpus", v.gpus);
  get_or(j, "memory", v.memory);
  get_or(j, "dataset_id", v.dataset_id);
  get_or(j, "image_id", v.image_id);
}

void to_json(Json& j, const NodeDescriptor& v) {
  j = Json{{"node_id", v.node_id},
           {"total_gpus", v.total_gpus},
           {"available_gpus", v.available_gpus},
           {"total_memory", v.total_memory},
           {"available_memory", v.available_memory},
           {"cached_datasets", v.cached_datasets},
           {"cached_images", v.cached_images},
           {"liveness", v.liveness},
           {"last_heartbeat", v.last_heartbeat}};
}

void from_json(const Json& j, NodeDescriptor& v) {
  j.at("node_id").get_to(v.node_id);
  get_or(j, "total_gpus", v.total_gpus);
  get_or(j, "available_gpus", v.available_gpus);
  get_or(j, "total_memory", v.total_memory);
  get_or(j, "available_memory", v.available_memory);
  get_or(j, "cached_datasets", v.cached_datasets);
  get_or(j, "cached_images", v.cached_images);
  get_or(j, "liveness", v.liveness);
  get_or(j, "last_heartbeat", v.last_heartbeat);
}

void to_json(Json& j, const WorkloadProfile& v) {
  j = Json{{"asymptote", v.asymptote},
           {"rate", v.rate},
           {"noise_sigma", v.noise_sigma},
           {"steps_total", v.steps_total},
           {"step_duration", v.step_duration},
           {"peak_memory", v.peak_memory},
           {"memory_ramp_steps", v.memory_ramp_steps},
           {"utilization", v.utilization},
           {"metric_name", v.metric_name},
           {"sensitivity", v.sensitivity}};
  put_opt(j, "failure_at", v.failure_at);
}

void from_json(const Json& j, WorkloadProfile& v) {
  get_or(j, "asymptote", v.asymptote);
  get_or(j, "rate", v.rate);
  get_or(j, "noise_sigma", v.noise_sigma);
  get_or(j, "steps_total", v.steps_total);
  get_or(j, "step_duration", v.step_duration);
  get_or(j, "peak_memory", v.peak_memory);
  get_or(j, "memory_ramp_steps", v.memory_ramp_steps);
  get_or(j, "utilization", v.utilization);
  get_or(j, "metric_name", v.metric_name);
  get_or(j, "sensitivity", v.sensitivity);
  get_opt(j, "failure_at", v.failure_at);
}

void to_json(Json& j, const Checkpoint& v) {
  j = Json{{"checkpoint_id", v.checkpoint_id}, {"session_id", v.session_id}, {"step", v.step},
           {"digest", v.digest},               {"curve_value", v.curve_value}, {"created_at", v.created_at}};
}

void from_json(const Json& j, Checkpoint& v) {
  j.at("checkpoint_id").get_to(v.checkpoint_id);
  j.at("session_id").get_to(v.session_id);
  j.at("step").get_to(v.step);
  j.at("digest").get_to(v.digest);
  get_or(j, "curve_value", v.curve_value);
  get_or(j, "created_at", v.created_at);
}

void to_json(Json& j, const Session& v) {
  j = Json{{"session_id", v.session_id},
           {"owner", v.owner},
           {"dataset_id", v.dataset_id},
           {"image_id", v.image_id},
           {"config", v.config},
           {"resources", v.resources},
           {"state", v.state},
           {"seed", v.seed},
           {"created_at", v.created_at},
           {"profile", v.profile},
           {"start_step", v.start_step},
           {"last_step", v.last_step},
           {"checkpoints", v.checkpoints},
           {"memos", v.memos}};
  put_opt(j, "team", v.team);
  put_opt(j, "node_id", v.node_id);
  put_opt(j, "parent", v.parent);
  put_opt(j, "started_at", v.started_at);
  put_opt(j, "finished_at", v.finished_at);
  put_opt(j, "serving_checkpoint", v.serving_checkpoint);
  put_opt(j, "sweep_id", v.sweep_id);
  put_opt(j, "hold_step", v.hold_step);
  put_opt(j, "request_id", v.request_id);
  put_opt(j, "at_barrier", v.at_barrier);
}

void from_json(const Json& j, Session& v) {
  j.at("session_id").get_to(v.session_id);
  j.at("owner").get_to(v.owner);
  get_or(j, "dataset_id", v.dataset_id);
  get_or(j, "image_id", v.image_id);
  get_or(j, "config", v.config);
  get_or(j, "resources", v.resources);
  get_or(j, "state", v.state);
  get_or(j, "seed", v.seed);
  get_or(j, "created_at", v.created_at);
  get_or(j, "profile", v.profile);
  get_or(j, "start_step", v.start_step);
  get_or(j, "last_step", v.last_step);
  get_or(j, "checkpoints", v.checkpoints);
  get_or(j, "memos", v.memos);
  get_opt(j, "team", v.team);
  get_opt(j, "node_id", v.node_id);
  get_opt(j, "parent", v.parent);
  get_opt(j, "started_at", v.started_at);
  get_opt(j, "finished_at", v.finished_at);
  get_opt(j, "serving_checkpoint", v.serving_checkpoint);
  get_opt(j, "sweep_id", v.sweep_id);
  get_opt(j, "hold_step", v.hold_step);
  get_opt(j, "request_id", v.request_id);
  get_opt(j, "at_barrier", v.at_barrier);
}

void to_json(Json& j, const Visibility& v) {
  if (v.is_public) j = Json{{"kind", "Public"}};
  else j = Json{{"kind", "TeamPrivate"}, {"team", v.team}};
}

void from_json(const Json& j, Visibility& v) {
  if (j.is_string()) {
    v = j.get<std::string>() == "Public" ? Visibility::Public() : Visibility::TeamPrivate("");
    return;
  }
  auto kind = j.value("kind", std::string("Public"));
  if (kind == "Public") v = Visibility::Public();
  else if (kind == "TeamPrivate") v = Visibility::TeamPrivate(j.at("team").get<std::string>());
  else invalid("unknown visibility '" + kind + "'");
}

void to_json(Json& j, const Dataset& v) {
  j = Json{{"dataset_id", v.dataset_id},   {"owner", v.owner},       {"visibility", v.visibility},
           {"size", v.size},               {"created_at", v.created_at}, {"last_access", v.last_access},
           {"path", v.path},               {"metric_name", v.metric_name}, {"order", v.order}};
}

void from_json(const Json& j, Dataset& v) {
  j.at("dataset_id").get_to(v.dataset_id);
  get_or(j, "owner", v.owner);
  get_or(j, "visibility", v.visibility);
  get_or(j, "size", v.size);
  get_or(j, "created_at", v.created_at);
  get_or(j, "last_access", v.last_access);
  get_or(j, "path", v.path);
  get_or(j, "metric_name", v.metric_name);
  get_or(j, "order", v.order);
}

void to_json(Json& j, const UserAccount& v) {
  j = Json{{"user_id", v.user_id}, {"role", v.role}, {"credit_balance", v.credit_balance}, {"teams", v.teams}};
}

void from_json(const Json& j, UserAccount& v) {
  j.at("user_id").get_to(v.user_id);
  get_or(j, "role", v.role);
  get_or(j, "credit_balance", v.credit_balance);
  get_or(j, "teams", v.teams);
}

void to_json(Json& j, const MetricEvent& v) {
  j = Json{{"session_id", v.session_id}, {"step", v.step}, {"name", v.name}, {"value", v.value},
           {"timestamp", v.timestamp}};
}

void from_json(const Json& j, MetricEvent& v) {
  j.at("session_id").get_to(v.session_id);
  j.at("step").get_to(v.step);
  j.at("name").get_to(v.name);
  j.at("value").get_to(v.value);
  get_or(j, "timestamp", v.timestamp);
}

void to_json(Json& j, const TelemetrySample& v) {
  j = Json{{"node_id", v.node_id},         {"gpu_index", v.gpu_index}, {"utilization_pct", v.utilization_pct},
           {"memory_used", v.memory_used}, {"timestamp", v.timestamp}};
  put_opt(j, "session_id", v.session_id);
}

void from_json(const Json& j, TelemetrySample& v) {
  j.at("node_id").get_to(v.node_id);
  j.at("gpu_index").get_to(v.gpu_index);
  j.at("utilization_pct").get_to(v.utilization_pct);
  get_or(j, "memory_used", v.memory_used);
  get_or(j, "timestamp", v.timestamp);
  get_opt(j, "session_id", v.session_id);
}

void to_json(Json& j, const Submission& v) {
  j = Json{{"submission_id", v.submission_id}, {"session_id", v.session_id}, {"user", v.user},
           {"dataset_id", v.dataset_id},       {"checkpoint_id", v.checkpoint_id},
           {"metric_name", v.metric_name},     {"order", v.order},           {"score", v.score},
           {"timestamp", v.timestamp}};
}

void from_json(const Json& j, Submission& v) {
  j.at("submission_id").get_to(v.submission_id);
  j.at("session_id").get_to(v.session_id);
  get_or(j, "user", v.user);
  get_or(j, "dataset_id", v.dataset_id);
  get_or(j, "checkpoint_id", v.checkpoint_id);
  get_or(j, "metric_name", v.metric_name);
  get_or(j, "order", v.order);
  j.at("score").get_to(v.score);
  get_or(j, "timestamp", v.timestamp);
}

void to_json(Json& j, const Notification& v) {
  j = Json{{"recipient", v.recipient}, {"session_id", v.session_id}, {"kind", v.kind},
           {"detail", v.detail},       {"timestamp", v.timestamp}};
}

void from_json(const Json& j, Notification& v) {
  j.at("recipient").get_to(v.recipient);
  j.at("session_id").get_to(v.session_id);
  j.at("kind").get_to(v.kind);
  get_or(j, "detail", v.detail);
  get_or(j, "timestamp", v.timestamp);
}

void to_json(Json& j, const LogRecord& v) {
  j = Json{{"seq", v.seq}, {"kind", v.kind}, {"id", v.id}, {"ts", v.ts}, {"payload", v.payload}};
}

void from_json(const Json& j, LogRecord& v) {
  j.at("seq").get_to(v.seq);
  j.at("kind").get_to(v.kind);
  j.at("id").get_to(v.id);
  j.at("ts").get_to(v.ts);
  v.payload = j.at("payload");
}

void to_json(Json& j, const LogLine& v) { j = Json{{"ts", v.ts}, {"text", v.text}}; }

void from_json(const Json& j, LogLine& v) {
  j.at("ts").get_to(v.ts);
  j.at("text").get_to(v.text);
}

void validate(const NodeDescriptor& n) {
  if (n.node_id.empty()) invalid("node_id must be non-empty");
  if (n.available_gpus > n.total_gpus)
    throw Error(ErrorCode::Invariant, "node " + n.node_id + ": available_gpus exceeds total_gpus");
  if (n.available_memory > n.total_memory)
    throw Error(ErrorCode::Invariant, "node " + n.node_id + ": available_memory exceeds total_memory");
}

void validate(const ResourceRequest& r) {
  if (r.memory == 0) invalid("resource request memory must be positive");
  if (r.dataset_id.empty()) invalid("resource request needs a dataset");
}

void validate(const WorkloadProfile& p) {
  if (!(p.asymptote > 0.0 && p.asymptote <= 1.0)) invalid("profile asymptote must lie in (0, 1]");
  if (!(p.rate > 0.0)) invalid("profile rate must be positive");
  if (!(p.noise_sigma >= 0.0)) invalid("profile noise_sigma must be non-negative");
  if (p.steps_total < 1) invalid("profile steps_total must be at least 1");
  if (p.step_duration <= 0) invalid("profile step_duration must be positive");
  if (p.memory_ramp_steps < 1) invalid("profile memory_ramp_steps must be at least 1");
  if (p.utilization.empty()) invalid("profile utilization series must be non-empty");
  for (double u : p.utilization)
    if (!(u >= 0.0 && u <= 100.0)) invalid("profile utilization must lie in [0, 100]");
  for (const auto& [k, opt] : p.sensitivity)
    if (!(opt > 0.0)) invalid("sensitivity optimum for '" + k + "' must be positive");
}

void validate(const Dataset& d) {
  if (d.dataset_id.empty()) invalid("dataset_id must be non-empty");
  if (d.dataset_id.find('/') != std::string::npos) invalid("dataset_id may not contain '/'");
  if (d.size == 0) invalid("dataset size must be positive");
  if (!d.visibility.is_public && d.visibility.team.empty()) invalid("TeamPrivate dataset needs a team");
}

void validate(const UserAccount& u) {
  if (u.user_id.empty()) invalid("user_id must be non-empty");
  if (u.user_id.find('/') != std::string::npos) invalid("user_id may not contain '/'");
  if (u.credit_balance < 0) throw Error(ErrorCode::Invariant, "credit balance of " + u.user_id + " is negative");
}

void validate(const TelemetrySample& s) {
  if (!(s.utilization_pct >= 0.0 && s.utilization_pct <= 100.0))
    invalid("telemetry utilization must lie in [0, 100]");
}

void validate(const Session& s) {
  if (holds_node(s.state) != s.node_id.has_value())
    throw Error(ErrorCode::Invariant,
                "session " + s.session_id + ": node binding inconsistent with state " + to_string(s.state));
}

}  // namespace deskml
