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

#include "deskml/placement.hpp"

#include <algorithm>
#include <vector>

namespace deskml {

int locality_score(const ResourceRequest& request, const NodeDescriptor& node) {
  int score = 0;
  if (node.cached_datasets.count(request.dataset_id)) score += 2;
  if (node.cached_images.count(request.image_id)) score += 1;
  return score;
}

PlacementKey placement_key(const ResourceRequest& request, const NodeDescriptor& node) {
  return {node.available_gpus, locality_score(request, node), node.node_id};
}

bool fits(const ResourceRequest& request, const NodeDescriptor& node) {
  return node.liveness == Liveness::Alive && node.available_gpus >= request.gpus &&
         node.available_memory >= request.memory;
}

std::optional<NodeId> place(const ResourceRequest& request, std::span<const NodeDescriptor> nodes) {
  std::vector<std::pair<PlacementKey, const NodeDescriptor*>> order;
  order.reserve(nodes.size());
  for (const auto& n : nodes) {
    if (n.liveness != Liveness::Alive) continue;
    order.emplace_back(placement_key(request, n), &n);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [key, node] : order) {
    if (fits(request, *node)) return node->node_id;
  }
  return std::nullopt;
}

std::optional<NodeId> place_random_feasible(const ResourceRequest& request,
                                            std::span<const NodeDescriptor> nodes, double draw) {
  std::vector<const NodeDescriptor*> feasible;
  for (const auto& n : nodes)
    if (fits(request, n)) feasible.push_back(&n);
  if (feasible.empty()) return std::nullopt;
  std::sort(feasible.begin(), feasible.end(),
            [](const auto* a, const auto* b) { return a->node_id < b->node_id; });
  auto idx = static_cast<std::size_t>(draw * static_cast<double>(feasible.size()));
  return feasible[std::min(idx, feasible.size() - 1)]->node_id;
}

}  // namespace deskml
