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
#include <fstream>
#include <optional>
#include <shared_mutex>
#include <vector>

#include "deskml/types.hpp"

namespace deskml {

/// Append-only record log, one JSON object per line:
///   {"seq":N,"kind":"...","id":"...","ts":T,"payload":{...}}
///
/// Sequence numbers start at 1 and are gapless. Appends are mutually
/// exclusive; reads take a shared lock and may run concurrently. When a path
/// is given, every append is written and flushed before it is acknowledged.
class EventLog {
 public:
  /// In-memory only.
  EventLog() = default;
  /// File-backed. Existing content is loaded and verified; a damaged line
  /// throws CorruptRecord with its position.
  explicit EventLog(std::filesystem::path path);

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  Seq append(std::string kind, std::string id, Timestamp ts, Json payload);
  /// Appends a record produced by another log. Its seq must be max_seq() + 1.
  void append_replicated(const LogRecord& record);

  /// Every record with seq >= from, in order. from must be >= 1.
  std::vector<LogRecord> replay(Seq from = 1) const;
  /// Records with from <= seq <= to.
  std::vector<LogRecord> range(Seq from, Seq to) const;
  std::optional<LogRecord> at(Seq seq) const;

  Seq max_seq() const;
  std::size_t size() const;
  /// Drops all records (and truncates the file). Used when a deposed replica resyncs.
  void reset();

  const std::optional<std::filesystem::path>& path() const { return path_; }

  /// Streams records of a log file without loading it into an EventLog.
  /// Stops at the first undecodable line with CorruptRecord.
  static std::vector<LogRecord> read_file(const std::filesystem::path& path, Seq from = 1);

 private:
  void write_line(const LogRecord& r);

  mutable std::shared_mutex mu_;
  std::vector<LogRecord> records_;
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
};

/// Snapshot file: {"max_seq": N, "state": {...}}.
struct Snapshot {
  Seq max_seq = 0;
  Json state;
};

void write_snapshot(const std::filesystem::path& path, const Snapshot& snap);
Snapshot read_snapshot(const std::filesystem::path& path);

}  // namespace deskml
