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

#include <iosfwd>
#include <mutex>

#include "deskml/types.hpp"

namespace deskml {

struct UtilizationSummary {
  /// Fraction of GPU samples attributed to a bound session.
  double running_ratio = 0.0;
  /// Fraction of GPUs whose mean utilization over the window exceeds 80%.
  double over80_ratio = 0.0;
  std::map<SessionId, double> per_session_mean;
  std::size_t gpus = 0;
  std::size_t samples = 0;
  bool empty = true;
};

void to_json(Json& j, const UtilizationSummary& v);

/// Time series of GPU samples. Per (node, gpu) the timestamps must not go
/// backwards; a sample that would is rejected.
class TelemetryStore {
 public:
  void append(const TelemetrySample& sample);

  /// Samples with from <= timestamp <= to, optionally for one node or session.
  std::vector<TelemetrySample> query(Timestamp from, Timestamp to, const std::optional<NodeId>& node = {},
                                     const std::optional<SessionId>& session = {}) const;

  /// Aggregates over samples with from <= timestamp <= to. Only GPUs that
  /// reported in the window count toward the totals.
  UtilizationSummary aggregate(Timestamp from, Timestamp to) const;

  /// One JSON object per line.
  void export_jsonl(std::ostream& out, Timestamp from, Timestamp to) const;

  std::size_t size() const;
  /// Drops samples older than `before`.
  void compact(Timestamp before);

 private:
  mutable std::mutex mu_;
  std::vector<TelemetrySample> samples_;
  std::map<std::pair<NodeId, std::uint32_t>, Timestamp> last_ts_;
};

/// Pure aggregation over an arbitrary sample set.
UtilizationSummary aggregate_utilization(const std::vector<TelemetrySample>& samples);

}  // namespace deskml
