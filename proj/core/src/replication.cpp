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

#include "deskml/replication.hpp"

#include <spdlog/spdlog.h>

#include "deskml/error.hpp"

namespace deskml {

void validate(const FailoverConfig& cfg) {
  if (cfg.heartbeat_interval <= 0) throw Error(ErrorCode::InvalidArgument, "heartbeat_interval must be positive");
  if (cfg.failover_timeout <= 2 * cfg.heartbeat_interval)
    throw Error(ErrorCode::InvalidArgument, "failover_timeout must exceed twice the heartbeat interval");
}

void to_json(Json& j, const HeartbeatMessage& m) {
  j = Json{{"epoch", m.epoch}, {"role", m.role}, {"max_seq", m.max_seq}, {"ts", m.ts}};
  if (!m.records.empty()) j["records"] = m.records;
}

void from_json(const Json& j, HeartbeatMessage& m) {
  j.at("epoch").get_to(m.epoch);
  j.at("role").get_to(m.role);
  j.at("max_seq").get_to(m.max_seq);
  j.at("ts").get_to(m.ts);
  m.records.clear();
  if (j.contains("records")) j.at("records").get_to(m.records);
}

Replica::Replica(std::string name, SchedulerRole role, FailoverConfig cfg,
                 std::optional<std::filesystem::path> log_path)
    : name_(std::move(name)), role_(role), cfg_(cfg) {
  validate(cfg_);
  log_ = log_path ? std::make_unique<EventLog>(*log_path) : std::make_unique<EventLog>();
  if (log_->max_seq() > 0) {
    state_ = rebuild(log_->replay(1));
    epoch_ = state_.epoch;
  }
}

void Replica::assume_primary(std::uint64_t epoch) {
  role_ = SchedulerRole::Primary;
  epoch_ = epoch;
}

HeartbeatMessage Replica::make_heartbeat(Timestamp now) const {
  HeartbeatMessage m{epoch_, role_, log_->max_seq(), now, {}};
  if (role_ == SchedulerRole::Primary && m.max_seq > peer_watermark_)
    m.records = log_->range(peer_watermark_ + 1, m.max_seq);
  return m;
}

HeartbeatAck Replica::record_heartbeat(const HeartbeatMessage& msg, Timestamp now, const RangeFetch& fetch) {
  if (!alive_) return {false, epoch_, log_->max_seq()};
  if (msg.epoch < epoch_) return {false, epoch_, log_->max_seq()};
  if (msg.epoch > epoch_) {
    if (role_ == SchedulerRole::Primary) {
      demote(msg.epoch, now);
    } else {
      epoch_ = msg.epoch;
    }
  }
  last_peer_seen_ = now;
  if (msg.role == SchedulerRole::Primary) {
    // A heartbeat proves the primary was alive when it was sent, not when
    // a slow link delivered it.
    last_primary_heartbeat_ = std::max(last_primary_heartbeat_, std::min(msg.ts, now));
    if (role_ == SchedulerRole::Secondary && msg.max_seq > log_->max_seq()) {
      auto batch = fetch(log_->max_seq() + 1, msg.max_seq);
      for (const auto& r : batch) {
        if (r.seq != log_->max_seq() + 1) continue;
        log_->append_replicated(r);
        state_.apply(r);
      }
    }
  } else if (role_ == SchedulerRole::Primary) {
    peer_watermark_ = msg.max_seq;
  }
  return {true, epoch_, log_->max_seq()};
}

void Replica::record_ack(const HeartbeatAck& ack, Timestamp now) {
  if (!alive_) return;
  if (ack.epoch > epoch_) {
    if (role_ == SchedulerRole::Primary) demote(ack.epoch, now);
    else epoch_ = ack.epoch;
    return;
  }
  // Acks from an earlier epoch describe a log that no longer exists.
  if (!ack.accepted || ack.epoch < epoch_) return;
  last_peer_seen_ = now;
  if (role_ == SchedulerRole::Primary) peer_watermark_ = ack.watermark;
}

std::optional<PromotionEvent> Replica::failover_check(Timestamp now) {
  if (!alive_ || role_ != SchedulerRole::Secondary) return std::nullopt;
  if (now - last_primary_heartbeat_ <= cfg_.failover_timeout) return std::nullopt;

  ControlState replayed = rebuild(log_->replay(1));
  if (replayed.digest() != state_.digest())
    throw Error(ErrorCode::Invariant, name_ + ": replayed state diverges from incrementally applied state");
  state_ = std::move(replayed);
  epoch_ = std::max(epoch_, state_.epoch) + 1;
  role_ = SchedulerRole::Primary;
  peer_watermark_ = 0;
  spdlog::info("{} promoted to primary in epoch {} at t={}", name_, epoch_, now);
  return PromotionEvent{name_, epoch_, now, last_primary_heartbeat_, log_->max_seq(), state_.digest()};
}

void Replica::demote(std::uint64_t new_epoch, Timestamp now) {
  if (role_ == SchedulerRole::Primary)
    spdlog::warn("{} deposed by epoch {} (was primary of epoch {})", name_, new_epoch, epoch_);
  role_ = SchedulerRole::Secondary;
  epoch_ = new_epoch;
  log_->reset();
  state_ = ControlState{};
  last_primary_heartbeat_ = now;
  peer_watermark_ = 0;
}

}  // namespace deskml
