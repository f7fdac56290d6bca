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

#include "deskml/registry.hpp"

#include <cmath>

#include "deskml/error.hpp"

namespace deskml {

namespace {

// Guards ceil against representation error, e.g. 3600 * (1/60) = 60.000000000000007.
constexpr double kCeilSlack = 1e-9;

std::int64_t ceil_credits(double x) {
  if (x <= 0.0) return 0;
  return static_cast<std::int64_t>(std::ceil(x - kCeilSlack));
}

}  // namespace

Dataset Registry::push_dataset(const UserId& owner, const DatasetId& id, Bytes size, Visibility visibility,
                               std::string metric_name, MetricOrder order, std::string path) {
  const auto& st = journal_.state();
  const auto& user = st.user(owner);
  Dataset d;
  d.dataset_id = id;
  d.owner = owner;
  d.visibility = std::move(visibility);
  d.size = size;
  d.created_at = journal_.now();
  d.last_access = d.created_at;
  d.metric_name = std::move(metric_name);
  d.order = order;
  d.path = path.empty() ? "datasets/" + id : std::move(path);
  validate(d);
  if (st.datasets.count(id)) throw Error(ErrorCode::Conflict, "dataset " + id + " already exists");
  if (!d.visibility.is_public && !user.teams.count(d.visibility.team))
    throw Error(ErrorCode::PermissionDenied, owner + " is not a member of team " + d.visibility.team);
  journal_.commit(rec::kDataset, id, Json{{"op", "push"}, {"dataset", d}});
  return d;
}

bool Registry::can_read(const UserId& user, const Dataset& dataset) const {
  if (dataset.visibility.is_public) return true;
  auto it = journal_.state().users.find(user);
  return it != journal_.state().users.end() && it->second.teams.count(dataset.visibility.team) > 0;
}

bool Registry::can_view_session(const UserId& user, const Session& session) const {
  if (auto d = journal_.state().datasets.find(session.dataset_id); d != journal_.state().datasets.end()) {
    if (!can_read(user, d->second)) return false;
  }
  if (session.owner == user) return true;
  if (!session.team) return false;
  auto it = journal_.state().users.find(user);
  return it != journal_.state().users.end() && it->second.teams.count(*session.team) > 0;
}

std::vector<Dataset> Registry::list_datasets(const UserId& requester) const {
  journal_.state().user(requester);
  std::vector<Dataset> out;
  for (const auto& [id, d] : journal_.state().datasets)
    if (can_read(requester, d)) out.push_back(d);
  return out;
}

ChargeResult Registry::charge_credit(const UserId& user, double gpu_seconds, double credits_per_gpu_second) {
  if (credits_per_gpu_second < 0.0) throw Error(ErrorCode::InvalidArgument, "credit rate must be >= 0");
  journal_.state().user(user);
  auto credits = ceil_credits(gpu_seconds * credits_per_gpu_second);
  auto gpu_ms = static_cast<std::int64_t>(std::llround(gpu_seconds * 1000.0));
  if (credits > 0 || gpu_ms > 0)
    journal_.commit(rec::kUser, user, Json{{"op", "charge"}, {"credits", credits}, {"gpu_ms", gpu_ms}});
  auto balance = journal_.state().user(user).credit_balance;
  return {credits, balance, balance == 0 && credits > 0};
}

ChargeResult Registry::charge_usage(const UserId& user, std::int64_t gpu_ms, double credits_per_gpu_minute) {
  if (credits_per_gpu_minute < 0.0) throw Error(ErrorCode::InvalidArgument, "credit rate must be >= 0");
  const auto& st = journal_.state();
  st.user(user);
  UsageAccrual acc;
  if (auto it = st.usage.find(user); it != st.usage.end()) acc = it->second;
  auto total_ms = acc.gpu_ms + gpu_ms;
  auto due = ceil_credits(static_cast<double>(total_ms) * credits_per_gpu_minute / 60000.0);
  auto credits = std::max<std::int64_t>(0, due - acc.charged);
  if (credits > 0 || gpu_ms > 0)
    journal_.commit(rec::kUser, user, Json{{"op", "charge"}, {"credits", credits}, {"gpu_ms", gpu_ms}});
  auto balance = st.user(user).credit_balance;
  return {credits, balance, balance == 0 && credits > 0};
}

UserAccount Registry::create_user(const UserId& id, Role role, std::int64_t credit, std::set<TeamId> teams) {
  UserAccount u{id, role, credit, std::move(teams)};
  validate(u);
  if (journal_.state().users.count(id)) throw Error(ErrorCode::Conflict, "user " + id + " already exists");
  journal_.commit(rec::kUser, id, Json{{"op", "create"}, {"account", u}});
  return u;
}

UserAccount Registry::manage_user(const UserId& caller, const UserAction& action) {
  const auto& st = journal_.state();
  auto c = st.users.find(caller);
  if (c == st.users.end() || c->second.role != Role::Admin)
    throw Error(ErrorCode::PermissionDenied, "only administrators can manage users");
  using K = UserAction::Kind;
  if (action.kind == K::Create) return create_user(action.target, action.role, action.credit);
  st.user(action.target);
  switch (action.kind) {
    case K::SetCredit:
      if (action.credit < 0) throw Error(ErrorCode::InvalidArgument, "credit must be >= 0");
      journal_.commit(rec::kUser, action.target, Json{{"op", "set_credit"}, {"balance", action.credit}});
      break;
    case K::SetRole:
      journal_.commit(rec::kUser, action.target, Json{{"op", "set_role"}, {"role", action.role}});
      break;
    case K::SetTeam:
      if (action.team.empty()) throw Error(ErrorCode::InvalidArgument, "team must be non-empty");
      journal_.commit(rec::kUser, action.target,
                      Json{{"op", "set_team"}, {"team", action.team}, {"member", action.member}});
      break;
    case K::Create:
      break;
  }
  return st.user(action.target);
}

}  // namespace deskml
