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

#pragma once

#include <filesystem>

#include "deskml/scenario.hpp"

namespace deskml {

/// deskmld configuration, read from an INI file:
///
///   [server]  bind, port, data_dir, scenario, time_scale, notify_file, webhook
///   [tokens]  <user> = <bearer token>
///   [roles]   <user> = admin | user
///   [credits] default = N, rate_per_gpu_minute = R, <user> = N
///   [sim]     heartbeat_interval, failover_timeout, tick, telemetry_period,
///             bandwidth, caching, cache_capacity, checkpoint_interval,
///             standby, seed, nodes, gpus_per_node, memory_per_node
struct GatewayConfig {
  std::string bind = "127.0.0.1";
  int port = 8470;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> scenario;
  /// Virtual milliseconds per wall-clock millisecond. 0 freezes the clock;
  /// time then only moves through POST /v1/sim/advance.
  double time_scale = 1.0;
  std::optional<std::filesystem::path> notify_file;
  std::optional<std::string> webhook;

  /// user -> token
  std::map<UserId, std::string> tokens;
  std::map<UserId, Role> roles;
  std::int64_t default_credit = 1000;
  std::map<UserId, std::int64_t> credits;

  SimConfig sim;
  /// Used when no scenario file is given.
  std::uint32_t nodes = 4;
  std::uint32_t gpus_per_node = 8;
  Bytes memory_per_node = 256 * kGiB;
};

/// Throws InvalidArgument on unreadable files or malformed values.
GatewayConfig load_gateway_config(const std::filesystem::path& path);

/// The scenario the server boots: the configured scenario file (or a plain
/// cluster of identical nodes) plus one account per token.
Scenario boot_scenario(const GatewayConfig& cfg);

}  // namespace deskml
