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

#include "deskml/scenario.hpp"

#include <fstream>

#include "deskml/error.hpp"
#include "json_util.hpp"

namespace deskml {

using detail::get_opt;
using detail::get_or;
using detail::put_opt;

void validate(const SimConfig& c) {
  auto positive = [](Duration d, const char* name) {
    if (d <= 0) throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be positive");
  };
  positive(c.heartbeat_interval, "heartbeat_interval");
  positive(c.failover_timeout, "failover_timeout");
  positive(c.telemetry_period, "telemetry_period");
  positive(c.tick, "tick");
  if (c.bandwidth == 0) throw Error(ErrorCode::InvalidArgument, "bandwidth must be positive");
  if (c.checkpoint_interval == 0) throw Error(ErrorCode::InvalidArgument, "checkpoint_interval must be positive");
  if (c.failover_timeout <= 2 * c.heartbeat_interval)
    throw Error(ErrorCode::InvalidArgument, "failover_timeout must exceed twice the heartbeat interval");
  if (c.credits_per_gpu_minute < 0) throw Error(ErrorCode::InvalidArgument, "credit rate must be >= 0");
}

void to_json(Json& j, const SimConfig& v) {
  j = Json{{"bandwidth", v.bandwidth},
           {"heartbeat_interval", v.heartbeat_interval},
           {"failover_timeout", v.failover_timeout},
           {"telemetry_period", v.telemetry_period},
           {"tick", v.tick},
           {"checkpoint_interval", v.checkpoint_interval},
           {"caching", v.caching},
           {"credits_per_gpu_minute", v.credits_per_gpu_minute},
           {"standby", v.standby},
           {"seed", v.seed}};
  put_opt(j, "cache_capacity", v.cache_capacity);
}

void from_json(const Json& j, SimConfig& v) {
  get_or(j, "bandwidth", v.bandwidth);
  get_or(j, "heartbeat_interval", v.heartbeat_interval);
  get_or(j, "failover_timeout", v.failover_timeout);
  get_or(j, "telemetry_period", v.telemetry_period);
  get_or(j, "tick", v.tick);
  get_or(j, "checkpoint_interval", v.checkpoint_interval);
  get_or(j, "caching", v.caching);
  get_or(j, "credits_per_gpu_minute", v.credits_per_gpu_minute);
  get_or(j, "standby", v.standby);
  get_or(j, "seed", v.seed);
  get_opt(j, "cache_capacity", v.cache_capacity);
}

void to_json(Json& j, const FaultSpec& v) {
  j = Json{{"at", v.at}, {"kind", v.kind}, {"target", v.target}, {"delay", v.delay}, {"window", v.window}};
}

void from_json(const Json& j, FaultSpec& v) {
  j.at("at").get_to(v.at);
  j.at("kind").get_to(v.kind);
  get_or(j, "target", v.target);
  get_or(j, "delay", v.delay);
  get_or(j, "window", v.window);
}

void to_json(Json& j, const NodeSpec& v) {
  j = Json{{"gpus", v.gpus}, {"memory", v.memory}};
  put_opt(j, "id", v.id);
}

void from_json(const Json& j, NodeSpec& v) {
  get_opt(j, "id", v.id);
  get_or(j, "gpus", v.gpus);
  get_or(j, "memory", v.memory);
}

void to_json(Json& j, const DatasetSpec& v) {
  j = Json{{"id", v.id}, {"owner", v.owner}, {"size", v.size}, {"metric", v.metric}, {"order", v.order}};
  put_opt(j, "team", v.team);
}

void from_json(const Json& j, DatasetSpec& v) {
  j.at("id").get_to(v.id);
  j.at("owner").get_to(v.owner);
  get_or(j, "size", v.size);
  get_opt(j, "team", v.team);
  get_or(j, "metric", v.metric);
  get_or(j, "order", v.order);
}

void to_json(Json& j, const UserSpec& v) {
  j = Json{{"id", v.id}, {"role", v.role}, {"credit", v.credit}, {"teams", v.teams}};
}

void from_json(const Json& j, UserSpec& v) {
  j.at("id").get_to(v.id);
  get_or(j, "role", v.role);
  get_or(j, "credit", v.credit);
  get_or(j, "teams", v.teams);
}

void to_json(Json& j, const JobSpec& v) {
  j = Json{{"at", v.at},         {"user", v.user},         {"dataset", v.dataset}, {"image", v.image},
           {"gpus", v.gpus},     {"memory", v.memory},     {"workload", v.workload}, {"config", v.config}};
  put_opt(j, "seed", v.seed);
}

void from_json(const Json& j, JobSpec& v) {
  get_or(j, "at", v.at);
  j.at("user").get_to(v.user);
  j.at("dataset").get_to(v.dataset);
  get_or(j, "image", v.image);
  get_or(j, "gpus", v.gpus);
  get_or(j, "memory", v.memory);
  get_or(j, "workload", v.workload);
  get_or(j, "config", v.config);
  get_opt(j, "seed", v.seed);
}

void to_json(Json& j, const Scenario& v) {
  j = Json{{"nodes", v.nodes},         {"datasets", v.datasets}, {"users", v.users}, {"workloads", v.workloads},
           {"jobs", v.jobs},           {"faults", v.faults},     {"sim", v.sim}};
}

void from_json(const Json& j, Scenario& v) {
  get_or(j, "nodes", v.nodes);
  get_or(j, "datasets", v.datasets);
  get_or(j, "users", v.users);
  get_or(j, "workloads", v.workloads);
  get_or(j, "jobs", v.jobs);
  get_or(j, "faults", v.faults);
  get_or(j, "sim", v.sim);
  validate(v.sim);
  for (const auto& job : v.jobs) {
    if (!job.workload.empty() && !v.workloads.count(job.workload))
      throw Error(ErrorCode::InvalidArgument, "job references unknown workload '" + job.workload + "'");
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open scenario " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "scenario " + path.string() + ": " + e.what());
  }
  return j.get<Scenario>();
}

}  // namespace deskml
