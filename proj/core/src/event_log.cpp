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

#include "deskml/event_log.hpp"

#include <mutex>

#include "deskml/error.hpp"

namespace deskml {

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(*path_)) records_ = read_file(*path_);
  out_.open(*path_, std::ios::app);
  if (!out_) throw Error(ErrorCode::Persistence, "cannot open log file " + path_->string());
}

std::vector<LogRecord> EventLog::read_file(const std::filesystem::path& path, Seq from) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Persistence, "cannot read log file " + path.string());
  std::vector<LogRecord> out;
  std::string line;
  std::size_t lineno = 0;
  Seq expected = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    LogRecord r;
    try {
      r = Json::parse(line).get<LogRecord>();
    } catch (const std::exception& e) {
      throw CorruptRecord(lineno, e.what());
    }
    if (r.seq != expected)
      throw CorruptRecord(lineno, "expected seq " + std::to_string(expected) + ", found " + std::to_string(r.seq));
    ++expected;
    if (r.seq >= from) out.push_back(std::move(r));
  }
  return out;
}

void EventLog::write_line(const LogRecord& r) {
  if (!path_) return;
  out_ << Json(r).dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::Persistence, "write to " + path_->string() + " failed");
}

Seq EventLog::append(std::string kind, std::string id, Timestamp ts, Json payload) {
  std::unique_lock lock(mu_);
  LogRecord r{records_.size() + 1, std::move(kind), std::move(id), ts, std::move(payload)};
  write_line(r);
  records_.push_back(std::move(r));
  return records_.back().seq;
}

void EventLog::append_replicated(const LogRecord& record) {
  std::unique_lock lock(mu_);
  if (record.seq != records_.size() + 1)
    throw Error(ErrorCode::Invariant, "replicated record seq " + std::to_string(record.seq) +
                                          " does not follow " + std::to_string(records_.size()));
  write_line(record);
  records_.push_back(record);
}

std::vector<LogRecord> EventLog::replay(Seq from) const {
  if (from < 1) throw Error(ErrorCode::InvalidArgument, "replay starts at sequence 1");
  std::shared_lock lock(mu_);
  if (from > records_.size()) return {};
  return {records_.begin() + static_cast<std::ptrdiff_t>(from - 1), records_.end()};
}

std::vector<LogRecord> EventLog::range(Seq from, Seq to) const {
  if (from < 1) from = 1;
  std::shared_lock lock(mu_);
  to = std::min<Seq>(to, records_.size());
  if (from > to) return {};
  return {records_.begin() + static_cast<std::ptrdiff_t>(from - 1),
          records_.begin() + static_cast<std::ptrdiff_t>(to)};
}

std::optional<LogRecord> EventLog::at(Seq seq) const {
  std::shared_lock lock(mu_);
  if (seq < 1 || seq > records_.size()) return std::nullopt;
  return records_[seq - 1];
}

Seq EventLog::max_seq() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::size_t EventLog::size() const { return max_seq(); }

void EventLog::reset() {
  std::unique_lock lock(mu_);
  records_.clear();
  if (path_) {
    out_.close();
    out_.open(*path_, std::ios::trunc);
    if (!out_) throw Error(ErrorCode::Persistence, "cannot truncate " + path_->string());
  }
}

void write_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << Json{{"max_seq", snap.max_seq}, {"state", snap.state}}.dump() << '\n';
    if (!out) throw Error(ErrorCode::Persistence, "cannot write snapshot " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Persistence, "cannot read snapshot " + path.string());
  try {
    auto j = Json::parse(in);
    return {j.at("max_seq").get<Seq>(), j.at("state")};
  } catch (const Json::exception& e) {
    throw CorruptRecord(1, e.what());
  }
}

}  // namespace deskml
