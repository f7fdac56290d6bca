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

#include <compare>
#include <optional>
#include <span>

#include "deskml/types.hpp"

namespace deskml {

/// Sort key for candidate nodes. Fewest available GPUs first (so large free
/// blocks survive), then best locality, then node id for determinism.
struct PlacementKey {
  std::uint32_t available_gpus = 0;
  /// 2 * [dataset cached] + [image cached]
  int locality_score = 0;
  NodeId node_id;

  friend std::strong_ordering operator<=>(const PlacementKey& a, const PlacementKey& b) {
    if (auto c = a.available_gpus <=> b.available_gpus; c != 0) return c;
    if (auto c = b.locality_score <=> a.locality_score; c != 0) return c;  // higher first
    return a.node_id <=> b.node_id;
  }
  friend bool operator==(const PlacementKey&, const PlacementKey&) = default;
};

int locality_score(const ResourceRequest& request, const NodeDescriptor& node);
PlacementKey placement_key(const ResourceRequest& request, const NodeDescriptor& node);
bool fits(const ResourceRequest& request, const NodeDescriptor& node);

/// Locality-aware defragmenting placement: sorts the live nodes by
/// PlacementKey and returns the first one that fits. Pure.
std::optional<NodeId> place(const ResourceRequest& request, std::span<const NodeDescriptor> nodes);

/// Baseline for comparison: a uniformly random feasible node, drawn with `draw`
/// in [0, 1).
std::optional<NodeId> place_random_feasible(const ResourceRequest& request,
                                            std::span<const NodeDescriptor> nodes, double draw);

}  // namespace deskml
