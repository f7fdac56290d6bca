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

#include "deskml/gateway/api.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <sstream>

namespace deskml {

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::stringstream ss(path);
  std::string seg;
  while (std::getline(ss, seg, '/'))
    if (!seg.empty()) out.push_back(seg);
  return out;
}

std::string join(const std::vector<std::string>& segs, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to && i < segs.size(); ++i) {
    if (!out.empty()) out += '/';
    out += segs[i];
  }
  return out;
}

Json parse_body(const ApiRequest& req) {
  if (req.body.empty()) return Json::object();
  try {
    auto j = Json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
    return j;
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed JSON body: ") + e.what());
  }
}

std::optional<std::string> query(const ApiRequest& req, const std::string& key) {
  auto it = req.query.find(key);
  if (it == req.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::int64_t query_int(const ApiRequest& req, const std::string& key, std::int64_t fallback) {
  auto v = query(req, key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    auto n = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "query parameter " + key + " must be an integer");
  }
}

[[noreturn]] void not_found(const ApiRequest& req) {
  throw Error(ErrorCode::NotFound, "no route for " + req.method + " " + req.path);
}

ApiResponse ok(Json body, int status = 200) { return {status, std::move(body)}; }

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
      return 400;
    case ErrorCode::Unauthenticated:
      return 401;
    case ErrorCode::PermissionDenied:
      return 403;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::StateError:
    case ErrorCode::Conflict:
      return 409;
    case ErrorCode::Rejected:
      return 422;
    case ErrorCode::Unavailable:
      return 503;
    case ErrorCode::Persistence:
    case ErrorCode::Corrupt:
    case ErrorCode::Invariant:
      return 500;
  }
  return 500;
}

Json checkpoint_manifest(const Session& s, const Checkpoint& c) {
  return Json{{"format", "deskml-model/1"},
              {"session_id", s.session_id},
              {"checkpoint_id", c.checkpoint_id},
              {"step", c.step},
              {"digest", c.digest},
              {"dataset_id", s.dataset_id},
              {"image_id", s.image_id},
              {"config", s.config},
              {"seed", s.seed},
              {"created_at", c.created_at}};
}

Json session_bundle(const Session& s, const std::vector<MetricEvent>& events, const std::vector<LogLine>& logs) {
  Json files = Json::array();
  Json meta = s;
  files.push_back(Json{{"name", "session.json"}, {"content", meta.dump(2)}});
  std::string ev;
  for (const auto& e : events) ev += Json(e).dump() + "\n";
  files.push_back(Json{{"name", "events.jsonl"}, {"content", ev}});
  std::string lg;
  for (const auto& l : logs) lg += std::to_string(l.ts) + " " + l.text + "\n";
  files.push_back(Json{{"name", "logs.txt"}, {"content", lg}});
  for (const auto& c : s.checkpoints)
    files.push_back(
        Json{{"name", "checkpoints/" + c.checkpoint_id + ".json"}, {"content", checkpoint_manifest(s, c).dump(2)}});
  return Json{{"format", "deskml-bundle/1"}, {"session_id", s.session_id}, {"files", files}};
}

Api::Api(Platform& platform, std::map<UserId, std::string> tokens) : platform_(platform) {
  for (const auto& [user, token] : tokens) {
    if (token.empty()) throw Error(ErrorCode::InvalidArgument, "empty token for " + user);
    tokens_[token] = user;
  }
}

UserId Api::authenticate(const std::optional<std::string>& bearer) const {
  if (!bearer) throw Error(ErrorCode::Unauthenticated, "missing bearer token");
  std::lock_guard lock(tokens_mu_);
  auto it = tokens_.find(*bearer);
  if (it == tokens_.end()) throw Error(ErrorCode::Unauthenticated, "invalid bearer token");
  return it->second;
}

void Api::require_admin(const UserId& caller) const {
  bool admin = platform_.with_state([&](const ControlState& st) { return st.user(caller).role == Role::Admin; });
  if (!admin) throw Error(ErrorCode::PermissionDenied, "administrator role required");
}

ApiResponse Api::handle(const ApiRequest& req) {
  try {
    return route(req);
  } catch (const AdmissionRejected& e) {
    return {http_status(e.code()),
            Json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}, {"reason", e.reason()}}}}};
  } catch (const Error& e) {
    return {http_status(e.code()), Json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}};
  } catch (const Json::exception& e) {
    return {400, Json{{"error", {{"code", to_string(ErrorCode::InvalidArgument)}, {"message", e.what()}}}}};
  } catch (const std::exception& e) {
    spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
    return {500, Json{{"error", {{"code", "internal"}, {"message", e.what()}}}}};
  }
}

ApiResponse Api::route(const ApiRequest& req) {
  auto segs = split_path(req.path);
  const auto& m = req.method;
  bool get = m == "GET", post = m == "POST";

  if (segs.size() >= 2 && segs[0] == "internal" && segs[1] == "log" && get) {
    require_admin(authenticate(req.bearer));
    auto from = static_cast<Seq>(query_int(req, "from", 1));
    auto records = platform_.with_state([](const ControlState& st) { return st.applied_seq; });
    auto to = static_cast<Seq>(query_int(req, "to", static_cast<std::int64_t>(records)));
    if (from < 1) throw Error(ErrorCode::InvalidArgument, "from must be >= 1");
    return ok(Json{{"records", platform_.log_range(from, to)}, {"max_seq", records}});
  }
  if (segs.empty() || segs[0] != "v1") not_found(req);
  std::string top = segs.size() > 1 ? segs[1] : "";

  if (top == "status" && get) {
    return ok(platform_.with_state([&](const ControlState& st) {
      std::map<std::string, std::size_t> by_state;
      for (const auto& [id, s] : st.sessions) ++by_state[to_string(s.state)];
      return Json{{"scheduler_epoch", st.epoch},
                  {"primary", platform_.primary_name().value_or("")},
                  {"reconciling", platform_.reconciling()},
                  {"now", platform_.now()},
                  {"nodes", st.node_descriptors(false)},
                  {"queue_depth", st.queue.size()},
                  {"sessions", by_state}};
    }));
  }
  if (top == "login" && post) {
    auto body = parse_body(req);
    auto user = body.at("user").get<std::string>();
    auto who = authenticate(body.at("token").get<std::string>());
    if (who != user) throw Error(ErrorCode::Unauthenticated, "token does not belong to " + user);
    auto role = platform_.with_state([&](const ControlState& st) { return st.user(user).role; });
    return ok(Json{{"user", user}, {"role", role}});
  }

  auto caller = authenticate(req.bearer);
  std::string rest = join(segs, 2, segs.size());

  if (top == "logout" && post) return ok(Json{{"user", caller}, {"logged_out", true}});
  if (top == "sessions") return sessions(req, caller, rest);
  if (top == "telemetry") return telemetry(req, caller, rest);
  if (top == "users") return users(req, caller, rest);

  if (top == "datasets" && segs.size() == 2) {
    if (get) {
      auto list = platform_.with_primary(
          [&](SessionManager& sm, Effects&) { return sm.registry().list_datasets(caller); });
      return ok(Json{{"datasets", list}});
    }
    if (post) {
      auto b = parse_body(req);
      auto id = b.contains("dataset_id") ? b.at("dataset_id").get<std::string>() : b.at("dataset").get<std::string>();
      Visibility vis = b.contains("team") && !b.at("team").is_null()
                           ? Visibility::TeamPrivate(b.at("team").get<std::string>())
                           : Visibility::Public();
      auto d = platform_.with_primary([&](SessionManager& sm, Effects&) {
        return sm.registry().push_dataset(caller, id, b.at("size").get<Bytes>(), vis,
                                          b.value("metric", std::string("accuracy")),
                                          b.value("order", MetricOrder::Descending), b.value("path", std::string()));
      });
      return ok(Json(d), 201);
    }
  }
  if (top == "leaderboard" && get && segs.size() == 3) {
    auto lb = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.leaderboard(caller, segs[2]); });
    return ok(Json(lb));
  }
  if (top == "sweeps") {
    if (post && segs.size() == 2) {
      auto b = parse_body(req);
      Json spec_json = b.contains("spec") ? b.at("spec") : b;
      if (!spec_json.contains("profile") && spec_json.contains("workload"))
        spec_json["profile"] = platform_.workload(spec_json.at("workload").get<std::string>());
      auto spec = spec_json.get<SweepSpec>();
      if (spec.image_id.empty()) spec.image_id = "base";
      auto launch = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.sweep(caller, spec); });
      return ok(Json(launch), 201);
    }
    if (get && segs.size() == 3) {
      return ok(platform_.with_primary([&](SessionManager& sm, Effects&) {
        Json out{{"sweep", sm.sweep_status(caller, segs[2])}, {"best", nullptr}};
        try {
          out["best"] = sm.sweep_best(caller, segs[2]);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::StateError) throw;
        }
        return out;
      }));
    }
  }
  if (top == "notifications" && get) {
    return ok(platform_.with_state([&](const ControlState& st) {
      Json out = Json::array();
      for (const auto& n : st.notifications)
        if (n.recipient == caller) out.push_back(n);
      return Json{{"notifications", out}};
    }));
  }
  if (top == "sim" && segs.size() == 3 && segs[2] == "advance" && post) {
    require_admin(caller);
    auto ms = parse_body(req).at("ms").get<Duration>();
    if (ms < 0) throw Error(ErrorCode::InvalidArgument, "ms must be >= 0");
    platform_.advance_by(ms);
    return ok(Json{{"now", platform_.now()}});
  }
  not_found(req);
}

ApiResponse Api::sessions(const ApiRequest& req, const UserId& caller, const std::string& rest) {
  auto segs = split_path(rest);
  bool get = req.method == "GET", post = req.method == "POST";

  if (segs.empty()) {
    if (get) {
      std::optional<UserId> owner = query(req, "owner");
      std::optional<SessionState> state;
      if (auto s = query(req, "state")) state = session_state_from_string(*s);
      auto offset = query_int(req, "offset", 0);
      auto limit = query_int(req, "limit", -1);
      if (offset < 0) throw Error(ErrorCode::InvalidArgument, "offset must be >= 0");
      auto list =
          platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.list(caller, owner, state); });
      Json page = Json::array();
      for (std::size_t i = static_cast<std::size_t>(offset); i < list.size(); ++i) {
        if (limit >= 0 && page.size() >= static_cast<std::size_t>(limit)) break;
        page.push_back(list[i]);
      }
      return ok(Json{{"sessions", page}, {"total", list.size()}, {"offset", offset}});
    }
    if (post) {
      auto b = parse_body(req);
      RunRequest r;
      r.user = caller;
      r.dataset = b.at("dataset").get<std::string>();
      r.image = b.value("image", std::string("base"));
      if (b.contains("config")) r.config = b.at("config").get<Config>();
      r.gpus = b.value("gpus", 1u);
      r.memory = b.value("memory", kGiB);
      if (b.contains("profile")) r.profile = b.at("profile").get<WorkloadProfile>();
      else r.profile = platform_.workload(b.value("workload", std::string("default")));
      if (b.contains("seed") && !b.at("seed").is_null()) r.seed = b.at("seed").get<std::uint64_t>();
      if (b.contains("team") && !b.at("team").is_null()) r.team = b.at("team").get<std::string>();
      if (b.contains("request_id") && !b.at("request_id").is_null())
        r.request_id = b.at("request_id").get<std::string>();
      auto id = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.run(r); });
      return ok(Json{{"session_id", id}, {"state", SessionState::Queued}}, 201);
    }
    not_found(req);
  }
  if (segs.size() < 3) throw Error(ErrorCode::NotFound, "session ids have the form user/dataset/N");
  SessionId id = join(segs, 0, 3);
  std::string action = segs.size() > 3 ? segs[3] : "";

  if (get) {
    if (action.empty()) {
      return ok(platform_.with_primary([&](SessionManager& sm, Effects&) { return Json(sm.get(caller, id)); }));
    }
    if (action == "logs") {
      auto lines = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.logs(caller, id); });
      return ok(Json{{"session_id", id}, {"lines", lines}});
    }
    if (action == "events") {
      auto events =
          platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.events(caller, id, query(req, "name")); });
      if (query(req, "count") == "1") return ok(Json{{"session_id", id}, {"count", events.size()}});
      return ok(Json{{"session_id", id}, {"events", events}});
    }
    if (action == "checkpoints") {
      auto s = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.get(caller, id); });
      if (segs.size() == 5) {
        if (segs[4] == "latest" && !s.checkpoints.empty()) return ok(checkpoint_manifest(s, s.checkpoints.back()));
        for (const auto& c : s.checkpoints)
          if (c.checkpoint_id == segs[4]) return ok(checkpoint_manifest(s, c));
        throw Error(ErrorCode::NotFound, "session " + id + " has no checkpoint " + segs[4]);
      }
      Json manifests = Json::array();
      for (const auto& c : s.checkpoints) manifests.push_back(checkpoint_manifest(s, c));
      return ok(Json{{"session_id", id}, {"checkpoints", s.checkpoints}, {"manifests", manifests}});
    }
    if (action == "diff") {
      std::vector<SessionId> ids{id};
      if (auto other = query(req, "other")) {
        std::stringstream ss(*other);
        std::string part;
        while (std::getline(ss, part, ','))
          if (!part.empty()) ids.push_back(part);
      }
      return ok(platform_.with_primary([&](SessionManager& sm, Effects&) { return Json(sm.compare(caller, ids)); }));
    }
    if (action == "backup") {
      return ok(platform_.with_primary([&](SessionManager& sm, Effects&) {
        return session_bundle(sm.get(caller, id), sm.events(caller, id), sm.logs(caller, id));
      }));
    }
    not_found(req);
  }
  if (!post) not_found(req);

  auto b = parse_body(req);
  std::optional<CheckpointId> ckpt;
  if (b.contains("checkpoint") && !b.at("checkpoint").is_null()) ckpt = b.at("checkpoint").get<std::string>();
  if (action == "stop") {
    auto st = platform_.with_primary([&](SessionManager& sm, Effects& fx) { return sm.stop(caller, id, fx); });
    return ok(Json{{"session_id", id}, {"state", st}});
  }
  if (action == "rm") {
    platform_.with_primary([&](SessionManager& sm, Effects&) { sm.rm(caller, id); });
    return ok(Json{{"session_id", id}, {"removed", true}});
  }
  if (action == "resume") {
    auto st = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.resume(caller, id); });
    return ok(Json{{"session_id", id}, {"state", st}});
  }
  if (action == "fork") {
    Config overrides;
    if (b.contains("overrides")) overrides = b.at("overrides").get<Config>();
    std::optional<std::uint64_t> seed;
    if (b.contains("seed") && !b.at("seed").is_null()) seed = b.at("seed").get<std::uint64_t>();
    auto child =
        platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.fork(caller, id, overrides, seed); });
    return ok(Json{{"session_id", child}, {"parent", id}}, 201);
  }
  if (action == "serve") {
    auto node = platform_.with_primary([&](SessionManager& sm, Effects& fx) { return sm.serve(caller, id, ckpt, fx); });
    auto s = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.get(caller, id); });
    return ok(Json{{"session_id", id}, {"state", s.state}, {"node", node}, {"checkpoint", s.serving_checkpoint ? Json(*s.serving_checkpoint) : Json()}});
  }
  if (action == "submit") {
    auto sub = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.submit(caller, id, ckpt); });
    return ok(Json(sub), 201);
  }
  if (action == "memo") {
    auto text = b.at("text").get<std::string>();
    auto memos = platform_.with_primary([&](SessionManager& sm, Effects&) {
      sm.memo(caller, id, text);
      return sm.get(caller, id).memos;
    });
    return ok(Json{{"session_id", id}, {"memos", memos}});
  }
  if (action == "infer") {
    Json payload = b.contains("payload") ? b.at("payload") : Json::object();
    auto r = platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.infer(caller, id, payload); });
    return ok(Json(r));
  }
  not_found(req);
}

ApiResponse Api::telemetry(const ApiRequest& req, const UserId& caller, const std::string& rest) {
  if (req.method != "GET") not_found(req);
  auto segs = split_path(rest);
  auto now = platform_.now();
  auto& store = platform_.telemetry();
  if (segs.size() == 1 && segs[0] == "nodes") {
    auto window = query_int(req, "window", 2 * platform_.sim().telemetry_period);
    std::map<std::pair<NodeId, std::uint32_t>, TelemetrySample> latest;
    for (const auto& s : store.query(now - window, now)) latest[{s.node_id, s.gpu_index}] = s;
    std::map<NodeId, Json> nodes;
    for (const auto& [key, s] : latest) {
      auto& n = nodes[key.first];
      if (n.is_null()) n = Json{{"node_id", key.first}, {"gpus", Json::array()}};
      n["gpus"].push_back(s);
    }
    Json out = Json::array();
    for (auto& [id, n] : nodes) out.push_back(std::move(n));
    return ok(Json{{"now", now}, {"nodes", out}});
  }
  if (segs.size() == 4 && segs[0] == "sessions") {
    SessionId id = join(segs, 1, 4);
    platform_.with_primary([&](SessionManager& sm, Effects&) { sm.get(caller, id); });
    auto window = query_int(req, "window", 60'000);
    auto samples = store.query(now - window, now, std::nullopt, id);
    double sum = 0.0;
    for (const auto& s : samples) sum += s.utilization_pct;
    return ok(Json{{"session_id", id},
                   {"from", now - window},
                   {"to", now},
                   {"samples", samples},
                   {"mean_utilization", samples.empty() ? Json(nullptr) : Json(sum / samples.size())}});
  }
  if (segs.size() == 1 && segs[0] == "aggregate") {
    Timestamp to = query_int(req, "to", now);
    Timestamp from = query(req, "from") ? query_int(req, "from", 0) : to - query_int(req, "window", 60'000);
    if (from > to) throw Error(ErrorCode::InvalidArgument, "telemetry window ends before it starts");
    Json out = store.aggregate(from, to);
    out["from"] = from;
    out["to"] = to;
    return ok(out);
  }
  not_found(req);
}

ApiResponse Api::users(const ApiRequest& req, const UserId& caller, const std::string& rest) {
  auto segs = split_path(rest);
  if (req.method == "GET" && segs.size() == 1) {
    const auto& target = segs[0];
    return ok(platform_.with_state([&](const ControlState& st) {
      const auto& me = st.user(caller);
      if (caller != target && me.role != Role::Admin)
        throw Error(ErrorCode::PermissionDenied, caller + " may not view account " + target);
      Json out = st.user(target);
      auto u = st.usage.find(target);
      out["gpu_ms"] = u == st.usage.end() ? 0 : u->second.gpu_ms;
      out["charged"] = u == st.usage.end() ? 0 : u->second.charged;
      return out;
    }));
  }
  if (req.method != "POST") not_found(req);
  auto b = parse_body(req);
  if (segs.empty()) {
    UserAction a;
    a.kind = UserAction::Kind::Create;
    a.target = b.at("user").get<std::string>();
    a.role = b.value("role", Role::User);
    a.credit = b.value("credit", std::int64_t{0});
    auto teams = b.value("teams", std::set<TeamId>{});
    std::optional<std::string> token;
    if (b.contains("token")) token = b.at("token").get<std::string>();
    if (token && token->empty()) throw Error(ErrorCode::InvalidArgument, "token must be non-empty");
    if (token) {
      std::lock_guard lock(tokens_mu_);
      if (tokens_.count(*token)) throw Error(ErrorCode::Conflict, "token already in use");
    }
    auto account = platform_.with_primary([&](SessionManager& sm, Effects&) {
      auto acc = sm.registry().manage_user(caller, a);
      for (const auto& t : teams) {
        UserAction add;
        add.kind = UserAction::Kind::SetTeam;
        add.target = a.target;
        add.team = t;
        acc = sm.registry().manage_user(caller, add);
      }
      return acc;
    });
    if (token) {
      std::lock_guard lock(tokens_mu_);
      tokens_[*token] = a.target;
    }
    return ok(Json(account), 201);
  }
  if (segs.size() == 2 && (segs[1] == "credit" || segs[1] == "team" || segs[1] == "role")) {
    UserAction a;
    a.target = segs[0];
    if (segs[1] == "credit") {
      a.kind = UserAction::Kind::SetCredit;
      a.credit = b.at("credit").get<std::int64_t>();
    } else if (segs[1] == "team") {
      a.kind = UserAction::Kind::SetTeam;
      a.team = b.at("team").get<std::string>();
      a.member = b.value("member", true);
    } else {
      a.kind = UserAction::Kind::SetRole;
      a.role = b.at("role").get<Role>();
    }
    auto account =
        platform_.with_primary([&](SessionManager& sm, Effects&) { return sm.registry().manage_user(caller, a); });
    return ok(Json(account));
  }
  not_found(req);
}

}  // namespace deskml
