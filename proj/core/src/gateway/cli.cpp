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

#include "deskml/gateway/cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "deskml/types.hpp"

namespace deskml {

namespace {

struct Failure {
  int code;
  std::string message;
};

struct Reply {
  int status = 0;
  std::string body;
  Json json;
};

struct TokenFile {
  std::string user;
  std::string token;
};

std::optional<TokenFile> read_token(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    auto j = Json::parse(in);
    return TokenFile{j.at("user").get<std::string>(), j.at("token").get<std::string>()};
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

class Client {
 public:
  Client(const std::string& host, std::optional<std::string> token) : http_(host), token_(std::move(token)) {
    http_.set_connection_timeout(5);
    http_.set_read_timeout(60);
  }

  Reply get(const std::string& path, const httplib::Params& params = {}) {
    return finish(http_.Get(path, params, headers()), "GET " + path);
  }

  Reply post(const std::string& path, const Json& body) {
    return finish(http_.Post(path, headers(), body.dump(), "application/json"), "POST " + path);
  }

  /// Streams a chunked response line by line.
  int stream(const std::string& path, const httplib::Params& params, const std::function<void(const std::string&)>& on_line) {
    std::string buffer;
    int status = 0;
    std::string error_body;
    auto res = http_.Get(
        path, params, headers(),
        [&](const httplib::Response& r) {
          status = r.status;
          return true;
        },
        [&](const char* data, std::size_t len) {
          if (status != 200) {
            error_body.append(data, len);
            return true;
          }
          buffer.append(data, len);
          std::size_t nl;
          while ((nl = buffer.find('\n')) != std::string::npos) {
            auto line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            on_line(line);
          }
          return true;
        });
    if (!res) throw Failure{8, "cannot reach server: " + httplib::to_string(res.error())};
    if (status != 200) {
      auto j = Json::parse(error_body, nullptr, false);
      throw Failure{cli_exit_code(j.is_object() ? j["error"].value("code", "") : ""),
                    j.is_object() ? j["error"].value("message", error_body) : error_body};
    }
    return 0;
  }

 private:
  httplib::Headers headers() const {
    httplib::Headers h;
    if (token_) h.emplace("Authorization", "Bearer " + *token_);
    return h;
  }

  static Reply finish(const httplib::Result& res, const std::string& what) {
    if (!res) throw Failure{8, "cannot reach server for " + what + ": " + httplib::to_string(res.error())};
    Reply r{res->status, res->body, Json::parse(res->body, nullptr, false)};
    return r;
  }

  httplib::Client http_;
  std::optional<std::string> token_;
};

Config parse_assignments(const std::vector<std::string>& items) {
  Config c;
  for (const auto& item : items) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw Failure{3, "expected key=value, got '" + item + "'"};
    c[item.substr(0, eq)] = parse_config_value(item.substr(eq + 1));
  }
  return c;
}

Bytes parse_bytes(const std::string& text) {
  if (text.empty()) throw Failure{3, "empty size"};
  Bytes unit = 1;
  std::string digits = text;
  switch (std::toupper(static_cast<unsigned char>(text.back()))) {
    case 'K':
      unit = kKiB;
      break;
    case 'M':
      unit = kMiB;
      break;
    case 'G':
      unit = kGiB;
      break;
    default:
      break;
  }
  if (unit != 1) digits.pop_back();
  try {
    std::size_t used = 0;
    auto n = std::stoull(digits, &used);
    if (used != digits.size()) throw std::invalid_argument(text);
    return n * unit;
  } catch (const std::exception&) {
    throw Failure{3, "cannot parse size '" + text + "' (use bytes or a K/M/G suffix)"};
  }
}

std::string cell(const Json& v) {
  if (v.is_null()) return "-";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void table(std::ostream& out, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << r[i];
      if (i + 1 < r.size()) out << std::string(width[i] - r[i].size() + 2, ' ');
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string file_safe(std::string id) {
  std::replace(id.begin(), id.end(), '/', '_');
  return id;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  f << content;
  if (!f) throw Failure{1, "cannot write " + path.string()};
}

/// Text chart of one metric: `height` rows, one column per step bucket.
void ascii_plot(std::ostream& out, const std::vector<std::pair<std::uint32_t, double>>& series, const std::string& name,
                std::size_t width = 60, std::size_t height = 10) {
  if (series.empty()) {
    out << "no events for " << name << '\n';
    return;
  }
  double lo = series.front().second, hi = lo;
  for (const auto& [s, v] : series) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::size_t cols = std::min(width, series.size());
  std::vector<double> col(cols, 0.0);
  std::vector<std::size_t> n(cols, 0);
  for (std::size_t i = 0; i < series.size(); ++i) {
    auto c = i * cols / series.size();
    col[c] += series[i].second;
    ++n[c];
  }
  std::vector<std::string> grid(height, std::string(cols, ' '));
  for (std::size_t c = 0; c < cols; ++c) {
    double v = col[c] / static_cast<double>(n[c]);
    double frac = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    auto row = static_cast<std::size_t>(std::lround(frac * static_cast<double>(height - 1)));
    grid[height - 1 - row][c] = '*';
  }
  out << name << " (steps " << series.front().first << ".." << series.back().first << ")\n";
  for (std::size_t r = 0; r < height; ++r) {
    std::string label = r == 0 ? fixed(hi) : r == height - 1 ? fixed(lo) : "";
    out << std::setw(10) << label << " |" << grid[r] << '\n';
  }
}

}  // namespace

CliOptions cli_options_from_env() {
  CliOptions o;
  if (const char* h = std::getenv("DESKML_HOST"); h && *h) {
    o.host = h;
    if (o.host.find("://") == std::string::npos) o.host = "http://" + o.host;
  }
  if (const char* t = std::getenv("DESKML_TOKEN_FILE"); t && *t) {
    o.token_file = t;
  } else {
    const char* home = std::getenv("HOME");
    o.token_file = std::filesystem::path(home ? home : ".") / ".deskml_token";
  }
  return o;
}

int cli_exit_code(const std::string& code) {
  static const std::map<std::string, int> codes{
      {"invalid_argument", 3}, {"not_found", 4},   {"permission_denied", 5}, {"unauthenticated", 5},
      {"state_error", 6},      {"conflict", 6},    {"rejected", 7},          {"unavailable", 8}};
  auto it = codes.find(code);
  return it == codes.end() ? 1 : it->second;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliOptions& opts) {
  CLI::App app{"deskml: client for the deskml control plane", "deskml"};
  app.require_subcommand(1);
  bool as_json = false;
  std::string host = opts.host;
  app.add_flag("--json", as_json, "Print the server's JSON response verbatim");
  app.add_option("--host", host, "Gateway URL (default from DESKML_HOST)");

  auto token = read_token(opts.token_file);
  std::function<int()> action;
  auto client = [&] { return Client(host, token ? std::optional<std::string>(token->token) : std::nullopt); };
  auto me = [&]() -> std::string {
    if (!token) throw Failure{5, "not logged in; run `deskml login <user> --token <token>`"};
    return token->user;
  };
  // Prints the reply (verbatim with --json) or the server's error.
  auto emit = [&](const Reply& r, const std::function<void(const Json&)>& human) {
    if (r.status >= 400 || r.json.is_discarded()) {
      std::string code, message = r.body;
      if (r.json.is_object() && r.json.contains("error")) {
        code = r.json["error"].value("code", "");
        message = r.json["error"].value("message", r.body);
      }
      err << "error: " << message << '\n';
      return cli_exit_code(code);
    }
    if (as_json) out << r.body << '\n';
    else human(r.json);
    return 0;
  };
  auto session_line = [&](const Json& j) { out << j.at("session_id").get<std::string>() << ": " << cell(j.at("state")) << '\n'; };

  // ---- account ----
  std::string login_user, login_token;
  auto* login = app.add_subcommand("login", "Store a token for later commands");
  login->add_option("user", login_user)->required();
  login->add_option("-t,--token", login_token, "Bearer token")->required();
  login->callback([&] {
    action = [&] {
      auto r = client().post("/v1/login", Json{{"user", login_user}, {"token", login_token}});
      auto rc = emit(r, [&](const Json& j) {
        out << "logged in as " << login_user << " (" << cell(j.at("role")) << ")\n";
      });
      if (rc == 0) {
        write_file(opts.token_file, Json{{"user", login_user}, {"token", login_token}}.dump() + "\n");
        std::filesystem::permissions(opts.token_file,
                                     std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
      }
      return rc;
    };
  });

  auto* logout = app.add_subcommand("logout", "Forget the stored token");
  logout->callback([&] {
    action = [&] {
      auto r = client().post("/v1/logout", Json::object());
      auto rc = emit(r, [&](const Json&) { out << "logged out\n"; });
      std::filesystem::remove(opts.token_file);
      return rc;
    };
  });

  std::string credit_user;
  std::optional<std::int64_t> credit_set;
  auto* credit = app.add_subcommand("credit", "Show (or, as admin, set) a credit balance");
  credit->add_option("user", credit_user, "Account (default: yourself)");
  credit->add_option("--set", credit_set, "New balance (admin only)");
  credit->callback([&] {
    action = [&] {
      auto user = credit_user.empty() ? me() : credit_user;
      auto show = [&](const Json& j) {
        out << j.at("user_id").get<std::string>() << ": " << j.at("credit_balance") << " credits";
        if (j.contains("charged")) out << " (" << j.at("charged") << " charged so far)";
        out << '\n';
      };
      if (credit_set) return emit(client().post("/v1/users/" + user + "/credit", Json{{"credit", *credit_set}}), show);
      return emit(client().get("/v1/users/" + user), show);
    };
  });

  // ---- session control ----
  std::string run_dataset, run_image = "base", run_workload = "default", run_profile, run_memory = "1G", run_team;
  std::vector<std::string> run_args;
  std::uint32_t run_gpus = 1;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Start a session");
  run->add_option("-d,--dataset", run_dataset, "Dataset id")->required();
  run->add_option("-a,--arg", run_args, "Hyperparameter key=value (repeatable)");
  run->add_option("-w,--workload", run_workload, "Workload profile name known to the server");
  run->add_option("--profile", run_profile, "Workload profile JSON file")->check(CLI::ExistingFile);
  run->add_option("-g,--gpus", run_gpus, "GPUs");
  run->add_option("-m,--memory", run_memory, "Memory, bytes or K/M/G suffix");
  run->add_option("-i,--image", run_image, "Container image id");
  run->add_option("--seed", run_seed, "Pin the seed");
  run->add_option("--team", run_team, "Share with a team");
  run->callback([&] {
    action = [&] {
      Json body{{"dataset", run_dataset}, {"image", run_image}, {"config", parse_assignments(run_args)},
                {"gpus", run_gpus},       {"memory", parse_bytes(run_memory)}};
      if (!run_profile.empty()) {
        std::ifstream f(run_profile);
        body["profile"] = Json::parse(f);
      } else {
        body["workload"] = run_workload;
      }
      if (run_seed) body["seed"] = *run_seed;
      if (!run_team.empty()) body["team"] = run_team;
      return emit(client().post("/v1/sessions", body), [&](const Json& j) { out << j.at("session_id").get<std::string>() << '\n'; });
    };
  });

  std::string sid;
  for (const char* name : {"stop", "rm", "resume"}) {
    auto* sub = app.add_subcommand(name, std::string(name) + " a session");
    sub->add_option("session", sid)->required();
    sub->callback([&, name = std::string(name)] {
      action = [&, name] {
        return emit(client().post("/v1/sessions/" + sid + "/" + name, Json::object()), [&](const Json& j) {
          if (j.contains("removed")) out << sid << ": removed\n";
          else session_line(j);
        });
      };
    });
  }

  std::vector<std::string> fork_args;
  std::optional<std::uint64_t> fork_seed;
  auto* fork = app.add_subcommand("fork", "Fork a session from its latest checkpoint");
  fork->add_option("session", sid)->required();
  fork->add_option("-a,--arg", fork_args, "Override key=value (repeatable)");
  fork->add_option("--seed", fork_seed, "Pin the child's seed");
  fork->callback([&] {
    action = [&] {
      Json body{{"overrides", parse_assignments(fork_args)}};
      if (fork_seed) body["seed"] = *fork_seed;
      return emit(client().post("/v1/sessions/" + sid + "/fork", body),
                  [&](const Json& j) { out << j.at("session_id").get<std::string>() << '\n'; });
    };
  });

  std::string ps_owner, ps_state;
  std::int64_t ps_limit = -1, ps_offset = 0;
  auto* ps = app.add_subcommand("ps", "List sessions you can see");
  ps->add_option("--owner", ps_owner);
  ps->add_option("--state", ps_state);
  ps->add_option("--limit", ps_limit);
  ps->add_option("--offset", ps_offset);
  ps->callback([&] {
    action = [&] {
      httplib::Params p;
      if (!ps_owner.empty()) p.emplace("owner", ps_owner);
      if (!ps_state.empty()) p.emplace("state", ps_state);
      if (ps_limit >= 0) p.emplace("limit", std::to_string(ps_limit));
      if (ps_offset > 0) p.emplace("offset", std::to_string(ps_offset));
      return emit(client().get("/v1/sessions", p), [&](const Json& j) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& s : j.at("sessions"))
          rows.push_back({s.at("session_id").get<std::string>(), cell(s.at("state")), cell(s.value("node_id", Json())),
                          std::to_string(s.at("last_step").get<std::uint32_t>()) + "/" +
                              std::to_string(s.at("profile").at("steps_total").get<std::uint32_t>()),
                          std::to_string(s.at("resources").at("gpus").get<std::uint32_t>())});
        table(out, {"SESSION", "STATE", "NODE", "STEP", "GPUS"}, rows);
      });
    };
  });

  bool follow = false;
  auto* logs = app.add_subcommand("logs", "Show session log lines");
  logs->add_option("session", sid)->required();
  logs->add_flag("-f,--follow", follow, "Stream until the session ends");
  logs->callback([&] {
    action = [&] {
      if (follow) {
        return client().stream("/v1/sessions/" + sid + "/logs", {{"follow", "1"}}, [&](const std::string& line) {
          if (as_json) {
            out << line << '\n' << std::flush;
            return;
          }
          auto l = Json::parse(line);
          out << l.at("ts") << ' ' << l.at("text").get<std::string>() << '\n' << std::flush;
        });
      }
      return emit(client().get("/v1/sessions/" + sid + "/logs"), [&](const Json& j) {
        for (const auto& l : j.at("lines")) out << l.at("ts") << ' ' << l.at("text").get<std::string>() << '\n';
      });
    };
  });

  std::string getid_dataset;
  auto* getid = app.add_subcommand("getid", "Print the id of your most recent session");
  getid->add_option("-d,--dataset", getid_dataset, "Only sessions on this dataset");
  getid->callback([&] {
    action = [&] {
      return emit(client().get("/v1/sessions", {{"owner", me()}}), [&](const Json& j) {
        const Json* best = nullptr;
        for (const auto& s : j.at("sessions")) {
          if (!getid_dataset.empty() && s.at("dataset_id") != getid_dataset) continue;
          if (!best || s.at("created_at") >= best->at("created_at")) best = &s;
        }
        if (!best) throw Failure{4, "no matching session"};
        out << best->at("session_id").get<std::string>() << '\n';
      });
    };
  });

  auto* command = app.add_subcommand("command", "Print the run command that reproduces a session");
  command->add_option("session", sid)->required();
  command->callback([&] {
    action = [&] {
      return emit(client().get("/v1/sessions/" + sid), [&](const Json& j) {
        out << "deskml run -d " << j.at("dataset_id").get<std::string>();
        for (const auto& [k, v] : j.at("config").items()) out << " -a " << k << '=' << cell(v);
        out << " -g " << j.at("resources").at("gpus") << " -m " << j.at("resources").at("memory") << " -i "
            << j.at("image_id").get<std::string>() << " --seed " << j.at("seed") << '\n';
      });
    };
  });

  std::vector<std::string> diff_ids;
  auto* diff = app.add_subcommand("diff", "Compare the configuration of sessions");
  diff->add_option("sessions", diff_ids)->required()->expected(2, -1);
  diff->callback([&] {
    action = [&] {
      std::string others;
      for (std::size_t i = 1; i < diff_ids.size(); ++i) others += (i > 1 ? "," : "") + diff_ids[i];
      return emit(client().get("/v1/sessions/" + diff_ids[0] + "/diff", {{"other", others}}), [&](const Json& j) {
        const auto& cols = j.at("columns");
        const auto& cells = j.at("exclusive_args");
        for (std::size_t c = 0; c < cols.size(); ++c) {
          out << cols[c].get<std::string>() << ':';
          for (std::size_t r = 0; r < cells.size(); ++r) {
            out << (r == 0 ? " " : cells.size() == 2 ? " -> " : " | ");
            out << (cells[r][c].is_null() ? "(absent)" : cell(cells[r][c]));
          }
          out << '\n';
        }
      });
    };
  });

  std::string out_dir = ".";
  auto* download = app.add_subcommand("download", "Save all checkpoint manifests of a session");
  download->add_option("session", sid)->required();
  download->add_option("-o,--output", out_dir, "Directory");
  download->callback([&] {
    action = [&] {
      return emit(client().get("/v1/sessions/" + sid + "/checkpoints"), [&](const Json& j) {
        auto dir = std::filesystem::path(out_dir) / file_safe(sid);
        for (const auto& m : j.at("manifests")) {
          auto path = dir / (m.at("checkpoint_id").get<std::string>() + ".json");
          write_file(path, m.dump(2) + "\n");
          out << path.string() << '\n';
        }
      });
    };
  });

  std::string backup_file;
  auto* backup = app.add_subcommand("backup", "Export a session bundle");
  backup->add_option("session", sid)->required();
  backup->add_option("-o,--output", backup_file, "Bundle file (default <session>.bundle.json)");
  backup->callback([&] {
    action = [&] {
      return emit(client().get("/v1/sessions/" + sid + "/backup"), [&](const Json& j) {
        auto path = backup_file.empty() ? file_safe(sid) + ".bundle.json" : backup_file;
        write_file(path, j.dump(2) + "\n");
        out << path << " (" << j.at("files").size() << " entries)\n";
      });
    };
  });

  // ---- data analysis ----
  std::string event_name;
  auto* events = app.add_subcommand("events", "Show metric events ordered by step");
  events->add_option("session", sid)->required();
  events->add_option("-n,--name", event_name, "Only this metric");
  events->callback([&] {
    action = [&] {
      httplib::Params p;
      if (!event_name.empty()) p.emplace("name", event_name);
      return emit(client().get("/v1/sessions/" + sid + "/events", p), [&](const Json& j) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& e : j.at("events"))
          rows.push_back({std::to_string(e.at("step").get<std::uint32_t>()), e.at("name").get<std::string>(),
                          fixed(e.at("value").get<double>(), 6)});
        table(out, {"STEP", "NAME", "VALUE"}, rows);
      });
    };
  });

  auto* eventlen = app.add_subcommand("eventlen", "Count metric events");
  eventlen->add_option("session", sid)->required();
  eventlen->add_option("-n,--name", event_name, "Only this metric");
  eventlen->callback([&] {
    action = [&] {
      httplib::Params p{{"count", "1"}};
      if (!event_name.empty()) p.emplace("name", event_name);
      return emit(client().get("/v1/sessions/" + sid + "/events", p),
                  [&](const Json& j) { out << j.at("count") << '\n'; });
    };
  });

  std::string memo_text;
  auto* memo = app.add_subcommand("memo", "Attach a note to a session");
  memo->add_option("session", sid)->required();
  memo->add_option("text", memo_text)->required();
  memo->callback([&] {
    action = [&] {
      return emit(client().post("/v1/sessions/" + sid + "/memo", Json{{"text", memo_text}}), [&](const Json& j) {
        for (const auto& m : j.at("memos")) out << "- " << m.get<std::string>() << '\n';
      });
    };
  });

  auto* model = app.add_subcommand("model", "List a session's checkpoints");
  model->add_option("session", sid)->required();
  model->callback([&] {
    action = [&] {
      return emit(client().get("/v1/sessions/" + sid + "/checkpoints"), [&](const Json& j) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& c : j.at("checkpoints"))
          rows.push_back({c.at("checkpoint_id").get<std::string>(), std::to_string(c.at("step").get<std::uint32_t>()),
                          c.at("digest").get<std::string>().substr(0, 12), std::to_string(c.at("created_at").get<Timestamp>())});
        table(out, {"CHECKPOINT", "STEP", "DIGEST", "CREATED"}, rows);
      });
    };
  });

  auto* plot = app.add_subcommand("plot", "Chart a metric (plot-ready JSON with --json)");
  plot->add_option("session", sid)->required();
  plot->add_option("-n,--name", event_name, "Metric (default: the first one)");
  plot->callback([&] {
    action = [&] {
      httplib::Params p;
      if (!event_name.empty()) p.emplace("name", event_name);
      return emit(client().get("/v1/sessions/" + sid + "/events", p), [&](const Json& j) {
        const auto& evs = j.at("events");
        std::string name = event_name.empty() && !evs.empty() ? evs[0].at("name").get<std::string>() : event_name;
        std::vector<std::pair<std::uint32_t, double>> series;
        for (const auto& e : evs)
          if (e.at("name") == name) series.emplace_back(e.at("step").get<std::uint32_t>(), e.at("value").get<double>());
        ascii_plot(out, series, name);
      });
    };
  });

  std::string ckpt;
  auto* pull = app.add_subcommand("pull", "Save one model manifest (latest by default)");
  pull->add_option("session", sid)->required();
  pull->add_option("checkpoint", ckpt, "Checkpoint id");
  pull->add_option("-o,--output", out_dir, "Directory");
  pull->callback([&] {
    action = [&] {
      auto id = ckpt.empty() ? std::string("latest") : ckpt;
      return emit(client().get("/v1/sessions/" + sid + "/checkpoints/" + id), [&](const Json& j) {
        auto path = std::filesystem::path(out_dir) / (file_safe(sid) + "-" + j.at("checkpoint_id").get<std::string>() + ".json");
        write_file(path, j.dump(2) + "\n");
        out << path.string() << '\n';
      });
    };
  });

  auto* submit = app.add_subcommand("submit", "Submit a checkpoint to the dataset's leaderboard");
  submit->add_option("session", sid)->required();
  submit->add_option("-c,--checkpoint", ckpt, "Checkpoint id (default: latest)");
  submit->callback([&] {
    action = [&] {
      Json body = Json::object();
      if (!ckpt.empty()) body["checkpoint"] = ckpt;
      return emit(client().post("/v1/sessions/" + sid + "/submit", body), [&](const Json& j) {
        out << j.at("submission_id").get<std::string>() << ": " << j.at("metric_name").get<std::string>() << " "
            << fixed(j.at("score").get<double>(), 6) << " on " << j.at("dataset_id").get<std::string>() << '\n';
      });
    };
  });

  std::string lb_dataset;
  auto* leaderboard = app.add_subcommand("leaderboard", "Show a dataset's leaderboard");
  leaderboard->add_option("dataset", lb_dataset)->required();
  leaderboard->callback([&] {
    action = [&] {
      return emit(client().get("/v1/leaderboard/" + lb_dataset), [&](const Json& j) {
        out << j.at("dataset").get<std::string>() << " (" << j.at("metric_name").get<std::string>() << ", "
            << cell(j.at("order")) << ")\n";
        std::vector<std::vector<std::string>> rows;
        for (const auto& e : j.at("entries"))
          rows.push_back({std::to_string(e.at("rank").get<std::uint32_t>()), e.at("user").get<std::string>(),
                          fixed(e.at("score").get<double>(), 6), e.at("session_id").get<std::string>()});
        table(out, {"RANK", "USER", "SCORE", "SESSION"}, rows);
      });
    };
  });

  // ---- service ----
  auto* dataset = app.add_subcommand("dataset", "Register or list datasets");
  dataset->require_subcommand(1);
  std::string ds_id, ds_size, ds_team, ds_metric = "accuracy", ds_order = "Descending";
  auto* push = dataset->add_subcommand("push", "Register a dataset");
  push->add_option("dataset", ds_id)->required();
  push->add_option("-s,--size", ds_size, "Size, bytes or K/M/G suffix")->required();
  push->add_option("--team", ds_team, "Restrict to a team");
  push->add_option("--metric", ds_metric, "Evaluation metric");
  push->add_option("--order", ds_order, "Ascending or Descending")->check(CLI::IsMember({"Ascending", "Descending"}));
  push->callback([&] {
    action = [&] {
      Json body{{"dataset_id", ds_id}, {"size", parse_bytes(ds_size)}, {"metric", ds_metric}, {"order", ds_order}};
      if (!ds_team.empty()) body["team"] = ds_team;
      return emit(client().post("/v1/datasets", body),
                  [&](const Json& j) { out << j.at("dataset_id").get<std::string>() << " registered\n"; });
    };
  });
  auto* list = dataset->add_subcommand("list", "List datasets you can read");
  list->callback([&] {
    action = [&] {
      return emit(client().get("/v1/datasets"), [&](const Json& j) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& d : j.at("datasets")) {
          const auto& vis = d.at("visibility");
          rows.push_back({d.at("dataset_id").get<std::string>(), d.at("owner").get<std::string>(),
                          std::to_string(d.at("size").get<Bytes>()),
                          vis.value("public", true) ? "public" : "team:" + vis.value("team", std::string()),
                          d.at("metric_name").get<std::string>(), std::to_string(d.at("last_access").get<Timestamp>())});
        }
        table(out, {"DATASET", "OWNER", "SIZE", "VISIBILITY", "METRIC", "LAST_ACCESS"}, rows);
      });
    };
  });

  std::int64_t window = 60'000;
  auto* gpustat = app.add_subcommand("gpustat", "Fleet GPU utilization over a window");
  gpustat->add_option("-w,--window", window, "Window in ms");
  gpustat->callback([&] {
    action = [&] {
      return emit(client().get("/v1/telemetry/aggregate", {{"window", std::to_string(window)}}), [&](const Json& j) {
        if (j.at("empty").get<bool>()) {
          out << "no samples in window\n";
          return;
        }
        out << "running_ratio " << fixed(j.at("running_ratio").get<double>()) << '\n'
            << "over80_ratio  " << fixed(j.at("over80_ratio").get<double>()) << '\n'
            << "gpus          " << j.at("gpus") << '\n'
            << "samples       " << j.at("samples") << '\n';
      });
    };
  });

  std::int64_t monitor_window = 2000;
  auto* gpumonitor = app.add_subcommand("gpumonitor", "Latest utilization of every GPU");
  gpumonitor->add_option("-w,--window", monitor_window, "Look-back in ms");
  gpumonitor->callback([&] {
    action = [&] {
      return emit(client().get("/v1/telemetry/nodes", {{"window", std::to_string(monitor_window)}}), [&](const Json& j) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& n : j.at("nodes"))
          for (const auto& g : n.at("gpus"))
            rows.push_back({n.at("node_id").get<std::string>(), std::to_string(g.at("gpu_index").get<std::uint32_t>()),
                            fixed(g.at("utilization_pct").get<double>(), 1), std::to_string(g.at("memory_used").get<Bytes>()),
                            cell(g.value("session_id", Json()))});
        table(out, {"NODE", "GPU", "UTIL%", "MEM", "SESSION"}, rows);
      });
    };
  });

  auto* status = app.add_subcommand("status", "Scheduler and node status");
  status->callback([&] {
    action = [&] {
      return emit(client().get("/v1/status"), [&](const Json& j) {
        out << "primary " << j.at("primary").get<std::string>() << " epoch " << j.at("scheduler_epoch") << " t="
            << j.at("now") << " queue " << j.at("queue_depth") << '\n';
        std::vector<std::vector<std::string>> rows;
        for (const auto& n : j.at("nodes"))
          rows.push_back({n.at("node_id").get<std::string>(), cell(n.at("liveness")),
                          std::to_string(n.at("available_gpus").get<std::uint32_t>()) + "/" +
                              std::to_string(n.at("total_gpus").get<std::uint32_t>())});
        table(out, {"NODE", "LIVENESS", "FREE_GPUS"}, rows);
      });
    };
  });

  auto* serve = app.add_subcommand("serve", "Serve a finished session's checkpoint");
  serve->add_option("session", sid)->required();
  serve->add_option("-c,--checkpoint", ckpt, "Checkpoint id (default: latest)");
  serve->callback([&] {
    action = [&] {
      Json body = Json::object();
      if (!ckpt.empty()) body["checkpoint"] = ckpt;
      return emit(client().post("/v1/sessions/" + sid + "/serve", body), [&](const Json& j) {
        out << sid << ": serving " << cell(j.at("checkpoint")) << " on " << j.at("node").get<std::string>() << '\n';
      });
    };
  });

  std::string payload = "{}";
  auto* infer = app.add_subcommand("infer", "Query a serving session");
  infer->add_option("session", sid)->required();
  infer->add_option("-p,--payload", payload, "JSON payload");
  infer->callback([&] {
    action = [&] {
      auto parsed = Json::parse(payload, nullptr, false);
      if (parsed.is_discarded()) throw Failure{3, "payload is not valid JSON"};
      return emit(client().post("/v1/sessions/" + sid + "/infer", Json{{"payload", parsed}}), [&](const Json& j) {
        out << j.at("output").dump() << '\n' << "latency " << j.at("latency_ms") << " ms\n";
      });
    };
  });

  auto* automl = app.add_subcommand("automl", "Hyperparameter sweeps");
  automl->require_subcommand(1);
  std::string spec_file, sweep_id;
  auto* automl_start = automl->add_subcommand("start", "Launch a sweep from a JSON spec");
  automl_start->add_option("spec", spec_file)->required()->check(CLI::ExistingFile);
  automl_start->callback([&] {
    action = [&] {
      std::ifstream f(spec_file);
      auto spec = Json::parse(f, nullptr, false);
      if (spec.is_discarded()) throw Failure{3, spec_file + " is not valid JSON"};
      return emit(client().post("/v1/sweeps", spec), [&](const Json& j) {
        out << j.at("sweep_id").get<std::string>() << ": " << j.at("sessions").size() << " sessions";
        if (j.at("rejected").get<std::uint32_t>() > 0) out << ", " << j.at("rejected") << " rejected for credit";
        out << '\n';
        for (const auto& s : j.at("sessions")) out << "  " << s.get<std::string>() << '\n';
      });
    };
  });
  auto* automl_status = automl->add_subcommand("status", "Show a sweep and its best member");
  automl_status->add_option("sweep", sweep_id)->required();
  automl_status->callback([&] {
    action = [&] {
      return emit(client().get("/v1/sweeps/" + sweep_id), [&](const Json& j) {
        const auto& w = j.at("sweep");
        out << sweep_id << " " << cell(w.at("spec").at("strategy")) << " generation " << w.at("generation") << ", "
            << w.at("members").size() << " members\n";
        if (!j.at("best").is_null())
          out << "best " << j.at("best").at("session_id").get<std::string>() << " checkpoint "
              << j.at("best").at("checkpoint_id").get<std::string>() << " score "
              << fixed(j.at("best").at("score").get<double>(), 6) << '\n';
      });
    };
  });

  auto* notifications = app.add_subcommand("notifications", "Show notifications sent to you");
  notifications->callback([&] {
    action = [&] {
      return emit(client().get("/v1/notifications"), [&](const Json& j) {
        for (const auto& n : j.at("notifications"))
          out << n.at("timestamp") << ' ' << cell(n.at("kind")) << ' ' << n.at("session_id").get<std::string>() << ": "
              << n.at("detail").get<std::string>() << '\n';
      });
    };
  });

  Duration advance_ms = 0;
  auto* advance = app.add_subcommand("advance", "Advance the simulated clock (admin)");
  advance->add_option("ms", advance_ms)->required();
  advance->callback([&] {
    action = [&] {
      return emit(client().post("/v1/sim/advance", Json{{"ms", advance_ms}}),
                  [&](const Json& j) { out << "t=" << j.at("now") << '\n'; });
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  try {
    return action ? action() : 2;
  } catch (const Failure& f) {
    err << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace deskml
