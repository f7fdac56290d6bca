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

#include "deskml/control_state.hpp"

namespace deskml {

struct UserAction {
  enum class Kind { Create, SetCredit, SetRole, SetTeam };
  Kind kind = Kind::Create;
  UserId target;
  std::int64_t credit = 0;
  Role role = Role::User;
  TeamId team;
  bool member = true;
};

struct ChargeResult {
  std::int64_t charged = 0;
  std::int64_t balance = 0;
  /// Balance is zero after this charge; running sessions must be safe-stopped.
  bool exhausted = false;
};

/// Datasets, users, teams and credits. A thin view over a journal; holds no
/// state of its own.
class Registry {
 public:
  explicit Registry(Journal& journal) : journal_(journal) {}

  Dataset push_dataset(const UserId& owner, const DatasetId& id, Bytes size, Visibility visibility,
                       std::string metric_name = "accuracy", MetricOrder order = MetricOrder::Descending,
                       std::string path = {});
  std::vector<Dataset> list_datasets(const UserId& requester) const;
  bool can_read(const UserId& user, const Dataset& dataset) const;
  /// Owner, or member of the session's team.
  bool can_view_session(const UserId& user, const Session& session) const;

  /// Decrements by ceil(gpu_seconds * rate), floored at zero.
  ChargeResult charge_credit(const UserId& user, double gpu_seconds, double credits_per_gpu_second);
  /// Per-tick charge: accrues GPU time and bills ceil of the cumulative total,
  /// at `credits_per_gpu_minute`.
  ChargeResult charge_usage(const UserId& user, std::int64_t gpu_ms, double credits_per_gpu_minute);

  /// Admin-only account management.
  UserAccount manage_user(const UserId& caller, const UserAction& action);
  /// Bootstrap path used when seeding accounts from configuration.
  UserAccount create_user(const UserId& id, Role role, std::int64_t credit, std::set<TeamId> teams = {});

 private:
  Journal& journal_;
};

}  // namespace deskml
