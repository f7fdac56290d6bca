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

#include "deskml/telemetry.hpp"

#include <algorithm>
#include <ostream>

#include "deskml/error.hpp"

namespace deskml {

void to_json(Json& j, const UtilizationSummary& v) {
  j = Json{{"running_ratio", v.running_ratio},
           {"over80_ratio", v.over80_ratio},
           {"per_session_mean", v.per_session_mean},
           {"gpus", v.gpus},
           {"samples", v.samples},
           {"empty", v.empty}};
}

UtilizationSummary aggregate_utilization(const std::vector<TelemetrySample>& samples) {
  UtilizationSummary out;
  if (samples.empty()) return out;
  out.empty = false;
  out.samples = samples.size();

  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<NodeId, std::uint32_t>, Acc> per_gpu;
  std::map<SessionId, Acc> per_session;
  std::size_t attributed = 0;
  for (const auto& s : samples) {
    auto& g = per_gpu[{s.node_id, s.gpu_index}];
    g.sum += s.utilization_pct;
    ++g.n;
    if (s.session_id) {
      ++attributed;
      auto& a = per_session[*s.session_id];
      a.sum += s.utilization_pct;
      ++a.n;
    }
  }
  std::size_t over80 = 0;
  for (const auto& [key, g] : per_gpu)
    if (g.sum / static_cast<double>(g.n) > 80.0) ++over80;
  out.gpus = per_gpu.size();
  out.running_ratio = static_cast<double>(attributed) / static_cast<double>(samples.size());
  out.over80_ratio = static_cast<double>(over80) / static_cast<double>(per_gpu.size());
  for (const auto& [sid, a] : per_session) out.per_session_mean[sid] = a.sum / static_cast<double>(a.n);
  return out;
}

void TelemetryStore::append(const TelemetrySample& sample) {
  validate(sample);
  std::lock_guard lock(mu_);
  auto key = std::make_pair(sample.node_id, sample.gpu_index);
  auto it = last_ts_.find(key);
  if (it != last_ts_.end() && sample.timestamp < it->second)
    throw Error(ErrorCode::InvalidArgument, "telemetry for " + sample.node_id + "/" +
                                                std::to_string(sample.gpu_index) + " went backwards in time");
  last_ts_[key] = sample.timestamp;
  samples_.push_back(sample);
}

std::vector<TelemetrySample> TelemetryStore::query(Timestamp from, Timestamp to, const std::optional<NodeId>& node,
                                                   const std::optional<SessionId>& session) const {
  std::lock_guard lock(mu_);
  std::vector<TelemetrySample> out;
  for (const auto& s : samples_) {
    if (s.timestamp < from || s.timestamp > to) continue;
    if (node && s.node_id != *node) continue;
    if (session && s.session_id != session) continue;
    out.push_back(s);
  }
  return out;
}

UtilizationSummary TelemetryStore::aggregate(Timestamp from, Timestamp to) const {
  return aggregate_utilization(query(from, to));
}

void TelemetryStore::export_jsonl(std::ostream& out, Timestamp from, Timestamp to) const {
  for (const auto& s : query(from, to)) out << Json(s).dump() << '\n';
}

std::size_t TelemetryStore::size() const {
  std::lock_guard lock(mu_);
  return samples_.size();
}

void TelemetryStore::compact(Timestamp before) {
  std::lock_guard lock(mu_);
  std::erase_if(samples_, [&](const TelemetrySample& s) { return s.timestamp < before; });
}

}  // namespace deskml
