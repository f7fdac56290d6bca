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

#include <utility>
#include <vector>

#include "deskml/types.hpp"

namespace deskml {

// Session lifecycle graph:
//
//   Queued -> Preparing -> Running -> Done -> Serving
//     |          |   \        |  \              |
//     |          |    -> Queued (node lost while copying)
//     v          v        v   v                 v
//   Stopped   Stopped   Stopped Failed/KilledOom  Stopped/Failed
//
// plus Preparing -> Failed and resume: Stopped|Failed -> Queued.

/// All declared edges of the lifecycle graph.
const std::vector<std::pair<SessionState, SessionState>>& lifecycle_edges();

bool is_legal_transition(SessionState from, SessionState to);

}  // namespace deskml
