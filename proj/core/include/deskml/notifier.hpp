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
#include <memory>
#include <mutex>

#include "deskml/types.hpp"

namespace deskml {

class NotificationSink {
 public:
  virtual ~NotificationSink() = default;
  /// Throws on delivery failure.
  virtual void deliver(const Notification& n) = 0;
  virtual std::string name() const = 0;
};

class MemorySink final : public NotificationSink {
 public:
  void deliver(const Notification& n) override;
  std::string name() const override { return "memory"; }
  std::vector<Notification> received() const;

 private:
  mutable std::mutex mu_;
  std::vector<Notification> received_;
};

/// Appends one JSON object per line.
class FileSink final : public NotificationSink {
 public:
  explicit FileSink(std::filesystem::path path);
  void deliver(const Notification& n) override;
  std::string name() const override { return "file:" + path_.string(); }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::ofstream out_;
};

struct NotifierStats {
  std::size_t delivered = 0;
  std::size_t failed = 0;
  std::size_t duplicates = 0;
  std::size_t fenced = 0;
};

/// Fans notifications out to sinks. A notification is delivered at most once
/// per sink (keyed by recipient, session, kind and time), so a primary that
/// re-derives it after failover does not send it twice. Deliveries stamped
/// with an epoch older than the newest one seen are dropped.
class Notifier {
 public:
  explicit Notifier(int max_attempts = 3) : max_attempts_(max_attempts) {}

  void add_sink(std::shared_ptr<NotificationSink> sink);
  /// Returns true if at least one sink accepted it.
  bool notify(const Notification& n, std::uint64_t epoch);
  NotifierStats stats() const;

 private:
  int max_attempts_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<NotificationSink>> sinks_;
  std::set<std::string> seen_;
  std::uint64_t epoch_ = 0;
  NotifierStats stats_;
};

}  // namespace deskml
