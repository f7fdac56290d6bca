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

#include "deskml/notifier.hpp"

#include <spdlog/spdlog.h>

#include "deskml/error.hpp"

namespace deskml {

void MemorySink::deliver(const Notification& n) {
  std::lock_guard lock(mu_);
  received_.push_back(n);
}

std::vector<Notification> MemorySink::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

FileSink::FileSink(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app);
  if (!out_) throw Error(ErrorCode::Persistence, "cannot open notification file " + path_.string());
}

void FileSink::deliver(const Notification& n) {
  std::lock_guard lock(mu_);
  out_ << Json(n).dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::Persistence, "write to " + path_.string() + " failed");
}

void Notifier::add_sink(std::shared_ptr<NotificationSink> sink) {
  std::lock_guard lock(mu_);
  sinks_.push_back(std::move(sink));
}

bool Notifier::notify(const Notification& n, std::uint64_t epoch) {
  std::lock_guard lock(mu_);
  if (epoch < epoch_) {
    ++stats_.fenced;
    return false;
  }
  epoch_ = epoch;
  bool any = false;
  for (const auto& sink : sinks_) {
    auto key = sink->name() + "|" + n.recipient + "|" + n.session_id + "|" + to_string(n.kind) + "|" +
               std::to_string(n.timestamp);
    if (seen_.count(key)) {
      ++stats_.duplicates;
      continue;
    }
    bool ok = false;
    for (int attempt = 1; attempt <= max_attempts_ && !ok; ++attempt) {
      try {
        sink->deliver(n);
        ok = true;
      } catch (const std::exception& e) {
        spdlog::warn("notification to {} via {} failed (attempt {}/{}): {}", n.recipient, sink->name(), attempt,
                     max_attempts_, e.what());
      }
    }
    if (ok) {
      seen_.insert(key);
      ++stats_.delivered;
      any = true;
    } else {
      ++stats_.failed;
      spdlog::error("giving up on {} notification for {} via {}", to_string(n.kind), n.session_id, sink->name());
    }
  }
  return any;
}

NotifierStats Notifier::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace deskml
