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

#include <functional>
#include <memory>

#include "deskml/control_state.hpp"

namespace deskml {

enum class SchedulerRole { Primary, Secondary };

NLOHMANN_JSON_SERIALIZE_ENUM(SchedulerRole, {{SchedulerRole::Primary, "Primary"},
                                             {SchedulerRole::Secondary, "Secondary"}})

struct FailoverConfig {
  Duration heartbeat_interval = 1000;
  Duration failover_timeout = 3000;
};

/// Throws InvalidArgument unless failover_timeout > 2 * heartbeat_interval > 0.
void validate(const FailoverConfig& cfg);

/// Heartbeat wire message: {epoch, role, max_seq, ts}. A primary piggybacks
/// the records its peer has not acknowledged yet.
struct HeartbeatMessage {
  std::uint64_t epoch = 0;
  SchedulerRole role = SchedulerRole::Primary;
  Seq max_seq = 0;
  Timestamp ts = 0;
  std::vector<LogRecord> records;
};

void to_json(Json& j, const HeartbeatMessage& m);
void from_json(const Json& j, HeartbeatMessage& m);

struct HeartbeatAck {
  bool accepted = true;
  std::uint64_t epoch = 0;
  /// Receiver's max seq after handling the message.
  Seq watermark = 0;
};

struct PromotionEvent {
  std::string replica;
  std::uint64_t epoch = 0;
  Timestamp at = 0;
  Timestamp last_primary_heartbeat = 0;
  /// State right after replaying the replicated log, before any new record.
  Seq replayed_max_seq = 0;
  std::string replayed_digest;
};

/// Fetches records [from, to] from the primary. In-process replicas read the
/// piggybacked batch; a networked secondary would issue a range request.
using RangeFetch = std::function<std::vector<LogRecord>(Seq from, Seq to)>;

/// One scheduler process: its role and epoch, its copy of the log, and the
/// state built from it.
class Replica {
 public:
  Replica(std::string name, SchedulerRole role, FailoverConfig cfg,
          std::optional<std::filesystem::path> log_path = std::nullopt);

  const std::string& name() const { return name_; }
  SchedulerRole role() const { return role_; }
  std::uint64_t epoch() const { return epoch_; }
  bool alive() const { return alive_; }
  void crash() { alive_ = false; }

  EventLog& log() { return *log_; }
  const EventLog& log() const { return *log_; }
  ControlState& state() { return state_; }
  const ControlState& state() const { return state_; }
  Journal journal(const Clock& clock) { return Journal(*log_, state_, clock); }

  /// Primary ships records after the peer's last reported watermark.
  HeartbeatMessage make_heartbeat(Timestamp now) const;
  /// Receiver side of a heartbeat from the peer.
  HeartbeatAck record_heartbeat(const HeartbeatMessage& msg, Timestamp now, const RangeFetch& fetch);
  /// Sender side: the peer's answer. A higher epoch deposes a primary.
  void record_ack(const HeartbeatAck& ack, Timestamp now);

  /// Secondary only: promotes when the primary has been silent for longer
  /// than failover_timeout. Replays the replicated log into fresh state.
  std::optional<PromotionEvent> failover_check(Timestamp now);

  /// Steps down after seeing a higher epoch. The local log may hold records
  /// the new primary never saw, so it is discarded and re-replicated.
  void demote(std::uint64_t new_epoch, Timestamp now);

  /// Becomes primary of a fresh cluster (epoch 1). Used at bootstrap.
  void assume_primary(std::uint64_t epoch);

  Timestamp last_primary_heartbeat() const { return last_primary_heartbeat_; }
  Timestamp last_peer_seen() const { return last_peer_seen_; }
  Seq peer_watermark() const { return peer_watermark_; }
  const FailoverConfig& config() const { return cfg_; }

 private:
  std::string name_;
  SchedulerRole role_;
  FailoverConfig cfg_;
  std::uint64_t epoch_ = 0;
  bool alive_ = true;
  std::unique_ptr<EventLog> log_;
  ControlState state_;
  Timestamp last_primary_heartbeat_ = 0;
  Timestamp last_peer_seen_ = 0;
  Seq peer_watermark_ = 0;
};

}  // namespace deskml
