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

#include "deskml/lifecycle.hpp"

#include <algorithm>

namespace deskml {

const std::vector<std::pair<SessionState, SessionState>>& lifecycle_edges() {
  using S = SessionState;
  static const std::vector<std::pair<S, S>> edges = {
      {S::Queued, S::Preparing},  {S::Queued, S::Stopped},

      {S::Preparing, S::Running}, {S::Preparing, S::Queued},   {S::Preparing, S::Stopped},
      {S::Preparing, S::Failed},

      {S::Running, S::Done},      {S::Running, S::Failed},     {S::Running, S::Stopped},
      {S::Running, S::KilledOom},

      {S::Done, S::Serving},

      {S::Serving, S::Stopped},   {S::Serving, S::Failed},

      {S::Stopped, S::Queued},    {S::Failed, S::Queued},
  };
  return edges;
}

bool is_legal_transition(SessionState from, SessionState to) {
  const auto& e = lifecycle_edges();
  return std::find(e.begin(), e.end(), std::make_pair(from, to)) != e.end();
}

}  // namespace deskml
