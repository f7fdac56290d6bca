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

#include "deskml/gateway/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "deskml/error.hpp"

namespace deskml {

namespace pt = boost::property_tree;

namespace {

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& out) {
  try {
    if (auto v = tree.get_optional<T>(key)) out = *v;
  } catch (const pt::ptree_bad_data&) {
    throw Error(ErrorCode::InvalidArgument, "config key " + key + " has a malformed value");
  }
}

template <typename T>
void read(const pt::ptree& tree, const std::string& key, std::optional<T>& out) {
  T v{};
  bool present = tree.get_optional<std::string>(key).has_value();
  if (!present) return;
  read(tree, key, v);
  out = v;
}

}  // namespace

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::InvalidArgument, "cannot read config " + path.string() + ": " + e.message());
  }
  GatewayConfig c;
  read(tree, "server.bind", c.bind);
  read(tree, "server.port", c.port);
  std::optional<std::string> s;
  read(tree, "server.data_dir", s);
  if (s) c.data_dir = *s;
  s.reset();
  read(tree, "server.scenario", s);
  if (s) c.scenario = *s;
  s.reset();
  read(tree, "server.notify_file", s);
  if (s) c.notify_file = *s;
  read(tree, "server.webhook", c.webhook);
  read(tree, "server.time_scale", c.time_scale);
  if (c.time_scale < 0) throw Error(ErrorCode::InvalidArgument, "server.time_scale must be >= 0");

  if (auto t = tree.get_child_optional("tokens"))
    for (const auto& [user, v] : *t) c.tokens[user] = v.get_value<std::string>();
  if (auto t = tree.get_child_optional("roles")) {
    for (const auto& [user, v] : *t) {
      auto r = v.get_value<std::string>();
      if (r == "admin") c.roles[user] = Role::Admin;
      else if (r == "user") c.roles[user] = Role::User;
      else throw Error(ErrorCode::InvalidArgument, "role of " + user + " must be admin or user, got '" + r + "'");
    }
  }
  if (auto t = tree.get_child_optional("credits")) {
    for (const auto& [key, v] : *t) {
      try {
        if (key == "default") c.default_credit = v.get_value<std::int64_t>();
        else if (key == "rate_per_gpu_minute") c.sim.credits_per_gpu_minute = v.get_value<double>();
        else c.credits[key] = v.get_value<std::int64_t>();
      } catch (const pt::ptree_bad_data&) {
        throw Error(ErrorCode::InvalidArgument, "credits." + key + " has a malformed value");
      }
    }
  }

  auto& sim = c.sim;
  read(tree, "sim.heartbeat_interval", sim.heartbeat_interval);
  read(tree, "sim.failover_timeout", sim.failover_timeout);
  read(tree, "sim.tick", sim.tick);
  read(tree, "sim.telemetry_period", sim.telemetry_period);
  read(tree, "sim.bandwidth", sim.bandwidth);
  read(tree, "sim.caching", sim.caching);
  read(tree, "sim.cache_capacity", sim.cache_capacity);
  read(tree, "sim.checkpoint_interval", sim.checkpoint_interval);
  read(tree, "sim.standby", sim.standby);
  read(tree, "sim.seed", sim.seed);
  read(tree, "sim.nodes", c.nodes);
  read(tree, "sim.gpus_per_node", c.gpus_per_node);
  read(tree, "sim.memory_per_node", c.memory_per_node);
  validate(sim);
  return c;
}

Scenario boot_scenario(const GatewayConfig& cfg) {
  Scenario sc;
  if (cfg.scenario) {
    sc = load_scenario(*cfg.scenario);
  } else {
    sc.sim = cfg.sim;
    for (std::uint32_t i = 0; i < cfg.nodes; ++i)
      sc.nodes.push_back(NodeSpec{std::nullopt, cfg.gpus_per_node, cfg.memory_per_node});
  }
  if (!sc.workloads.count("default")) sc.workloads["default"] = WorkloadProfile{};
  std::set<UserId> known;
  for (const auto& u : sc.users) known.insert(u.id);
  for (const auto& [user, token] : cfg.tokens) {
    if (known.count(user)) continue;
    UserSpec u;
    u.id = user;
    if (auto r = cfg.roles.find(user); r != cfg.roles.end()) u.role = r->second;
    auto cr = cfg.credits.find(user);
    u.credit = cr != cfg.credits.end() ? cr->second : cfg.default_credit;
    sc.users.push_back(std::move(u));
  }
  return sc;
}

}  // namespace deskml
