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

#include <deque>
#include <functional>

#include "deskml/clock.hpp"
#include "deskml/event_log.hpp"
#include "deskml/sweep_spec.hpp"
#include "deskml/types.hpp"

namespace deskml {

struct NodeRecord {
  std::uint32_t total_gpus = 0;
  Bytes total_memory = 0;
  std::uint32_t bound_gpus = 0;
  Bytes bound_memory = 0;
  std::set<DatasetId> cached_datasets;
  std::set<ImageId> cached_images;
  Liveness liveness = Liveness::Alive;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

struct Binding {
  NodeId node;
  std::uint32_t gpus = 0;
  Bytes memory = 0;
  friend bool operator==(const Binding&, const Binding&) = default;
};

/// GPU time consumed and credits charged so far, per user. Charges round the
/// cumulative total up, so per-tick rounding never overcharges.
struct UsageAccrual {
  std::int64_t gpu_ms = 0;
  std::int64_t charged = 0;
  friend bool operator==(const UsageAccrual&, const UsageAccrual&) = default;
};

/// Observer hook: (session, from, to, seq of the record that caused it).
using TransitionObserver = std::function<void(const SessionId&, SessionState, SessionState, Seq)>;

/// Every table of the control plane. The only way to mutate it is apply(),
/// so replaying a log into a fresh instance reproduces the live one.
class ControlState {
 public:
  std::map<NodeId, NodeRecord> nodes;
  std::map<SessionId, Session> sessions;
  std::map<SessionId, Binding> bindings;
  std::deque<SessionId> queue;
  std::map<std::string, std::uint32_t> session_seq;  // "user/dataset" -> last issued
  std::map<SessionId, SessionId> lineage;            // child -> parent; survives rm
  std::map<DatasetId, Dataset> datasets;
  std::map<UserId, UserAccount> users;
  std::map<UserId, UsageAccrual> usage;
  std::map<SessionId, std::vector<MetricEvent>> metrics;
  std::map<SessionId, std::vector<LogLine>> logs;
  std::vector<Submission> submissions;
  std::vector<Notification> notifications;
  std::map<std::string, SweepRecord> sweeps;
  std::map<NodeId, Seq> node_report_seq;
  std::uint64_t epoch = 0;
  std::uint64_t next_checkpoint = 1;
  std::uint64_t next_submission = 1;
  std::uint64_t next_sweep = 1;
  Seq applied_seq = 0;

  /// Not part of the state; fired on every session state change.
  TransitionObserver on_transition;

  /// Applies one record. Records must arrive in seq order. Throws
  /// Error(Invariant) if the record would break a table invariant.
  void apply(const LogRecord& r);

  Json to_json() const;
  static ControlState from_json(const Json& j);
  /// SHA-256 of the canonical JSON dump; equal digests mean equal state.
  std::string digest() const;

  NodeDescriptor node_descriptor(const NodeId& id) const;
  std::vector<NodeDescriptor> node_descriptors(bool alive_only) const;

  const Session& session(const SessionId& id) const;
  const Dataset& dataset(const DatasetId& id) const;
  const UserAccount& user(const UserId& id) const;

 private:
  void apply_node(const LogRecord& r);
  void apply_user(const LogRecord& r);
  void apply_session(const LogRecord& r);
  void apply_report(const LogRecord& r);
  void apply_sweep(const LogRecord& r);
  void transition(Session& s, SessionState to, Timestamp ts, Seq seq, const std::string& why);
  void bind(Session& s, const NodeId& node, std::uint32_t gpus, Bytes memory);
  void unbind(Session& s);
  void log_line(const SessionId& id, Timestamp ts, std::string text);
  /// Ids are issued here so they stay gapless across replay.
  void add_checkpoint(Session& s, Checkpoint c);
};

/// Replays records into a fresh state.
ControlState rebuild(const std::vector<LogRecord>& records, TransitionObserver observer = {});

/// A log and the state it produces, kept in lockstep: commit() appends a
/// record and applies it.
class Journal {
 public:
  Journal(EventLog& log, ControlState& state, const Clock& clock) : log_(log), state_(state), clock_(clock) {}

  Seq commit(std::string kind, std::string id, Json payload);

  const ControlState& state() const { return state_; }
  const EventLog& log() const { return log_; }
  Timestamp now() const { return clock_.now(); }

 private:
  EventLog& log_;
  ControlState& state_;
  const Clock& clock_;
};

/// Record kinds.
namespace rec {
inline constexpr const char* kNode = "node";
inline constexpr const char* kUser = "user";
inline constexpr const char* kDataset = "dataset";
inline constexpr const char* kSession = "session";
inline constexpr const char* kReport = "report";
inline constexpr const char* kSubmission = "submission";
inline constexpr const char* kNotify = "notify";
inline constexpr const char* kSweep = "sweep";
inline constexpr const char* kScheduler = "scheduler";
}  // namespace rec

}  // namespace deskml
