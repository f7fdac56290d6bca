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

#include <gtest/gtest.h>

#include <random>

#include "deskml/workload.hpp"
#include "support.hpp"

namespace deskml {
namespace {

using testing::all_terminal;
using testing::Bench;
using testing::run;
using testing::run_request;
using testing::small_scenario;
using testing::state_of;

using Stream = std::vector<std::tuple<std::uint32_t, std::string, double>>;

Stream stream_of(Platform& p, const SessionId& id) {
  return p.with_state([&](const ControlState& st) {
    Stream out;
    auto it = st.metrics.find(id);
    if (it == st.metrics.end()) return out;
    for (const auto& e : it->second) out.emplace_back(e.step, e.name, e.value);
    std::sort(out.begin(), out.end());
    return out;
  });
}

Stream after_step(const Stream& s, std::uint32_t step) {
  Stream out;
  for (const auto& e : s)
    if (std::get<0>(e) > step) out.push_back(e);
  return out;
}

template <typename F>
auto call(Platform& p, F&& f) {
  return p.with_primary([&](SessionManager& sm, Effects& fx) { return f(sm, fx); });
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Invariant;
}

bool finish(Platform& p, Timestamp budget = 400'000) {
  return p.run_until([&] { return all_terminal(p); }, p.now() + budget);
}

TEST(Run, IdsFollowPerUserDatasetSequence) {
  Platform p(small_scenario());
  EXPECT_EQ(run(p, run_request("alice", "mnist")), "alice/mnist/1");
  EXPECT_EQ(run(p, run_request("alice", "mnist")), "alice/mnist/2");
  EXPECT_EQ(run(p, run_request("alice", "faces")), "alice/faces/1");
  EXPECT_EQ(run(p, run_request("bob", "mnist")), "bob/mnist/1");
}

TEST(Run, PrivateDatasetNonMemberDenied) {
  Platform p(small_scenario());
  EXPECT_EQ(code_of([&] { run(p, run_request("carol", "faces")); }), ErrorCode::PermissionDenied);
}

TEST(Run, RequestIdMakesRetriesIdempotent) {
  Platform p(small_scenario());
  auto r = run_request("alice", "mnist");
  r.request_id = "req-1";
  auto first = run(p, r);
  EXPECT_EQ(run(p, r), first);
  auto other = run_request("bob", "mnist");
  other.request_id = "req-1";
  EXPECT_NE(run(p, other), first) << "request ids are scoped to their user";
  EXPECT_EQ(p.with_state([](const ControlState& st) { return st.sessions.size(); }), 2u);
}

TEST(Run, StoresFullConfigSnapshotAndSeed) {
  Platform p(small_scenario());
  auto r = run_request("alice", "mnist", {{"lr", 0.02}, {"bs", std::int64_t{64}}, {"opt", std::string("adam")}});
  r.seed = 1234;
  auto id = run(p, r);
  p.with_state([&](const ControlState& st) {
    EXPECT_EQ(st.session(id).config, r.config);
    EXPECT_EQ(st.session(id).seed, 1234u);
    EXPECT_EQ(st.session(id).state, SessionState::Queued);
    return 0;
  });
  auto other = run(p, run_request("alice", "mnist"));
  auto third = run(p, run_request("alice", "mnist"));
  EXPECT_NE(p.with_state([&](const ControlState& st) { return st.session(other).seed; }),
            p.with_state([&](const ControlState& st) { return st.session(third).seed; }));
}

TEST(Lifecycle, StopRunningCheckpointsAndReleases) {
  Platform p(small_scenario(1, 4));
  auto r = run_request("alice", "mnist", {{"lr", 0.01}}, 2);
  r.profile.steps_total = 100;
  auto id = run(p, r);
  ASSERT_TRUE(p.run_until([&] { return stream_of(p, id).size() >= 15; }, 100'000));
  auto st = call(p, [&](SessionManager& sm, Effects& fx) { return sm.stop("alice", id, fx); });
  EXPECT_EQ(st, SessionState::Stopped);
  p.with_state([&](const ControlState& s) {
    const auto& sess = s.session(id);
    EXPECT_FALSE(sess.node_id);
    if (sess.checkpoints.empty()) { ADD_FAILURE(); return 0; }
    EXPECT_EQ(sess.checkpoints.back().step, sess.last_step);
    EXPECT_EQ(s.node_descriptor("node-1").available_gpus, 4u);
    return 0;
  });
  p.advance_by(5000);
  auto n = stream_of(p, id).size();
  p.advance_by(5000);
  EXPECT_EQ(stream_of(p, id).size(), n) << "a stopped session reports nothing more";
}

TEST(Lifecycle, StopQueuedNeedsNoCheckpoint) {
  Platform p(small_scenario(1, 1));
  run(p, run_request("alice", "mnist"));
  auto queued = run(p, run_request("alice", "mnist"));
  p.advance_by(2000);
  ASSERT_EQ(state_of(p, queued), SessionState::Queued);
  call(p, [&](SessionManager& sm, Effects& fx) { return sm.stop("alice", queued, fx); });
  EXPECT_EQ(state_of(p, queued), SessionState::Stopped);
}

TEST(Lifecycle, RmRequiresTerminalState) {
  Platform p(small_scenario());
  auto id = run(p, run_request("alice", "mnist"));
  p.advance_by(5000);
  ASSERT_EQ(state_of(p, id), SessionState::Running);
  EXPECT_EQ(code_of([&] { call(p, [&](SessionManager& sm, Effects&) { sm.rm("alice", id); return 0; }); }),
            ErrorCode::StateError);
  ASSERT_TRUE(finish(p));
  call(p, [&](SessionManager& sm, Effects&) { sm.rm("alice", id); return 0; });
  EXPECT_FALSE(p.with_state([&](const ControlState& st) { return st.sessions.count(id) > 0; }));
}

TEST(Lifecycle, IllegalTransitionNamesCurrentState) {
  Platform p(small_scenario());
  auto id = run(p, run_request("alice", "mnist"));
  ASSERT_TRUE(finish(p));
  try {
    call(p, [&](SessionManager& sm, Effects& fx) { return sm.stop("alice", id, fx); });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StateError);
    EXPECT_NE(std::string(e.what()).find("Done"), std::string::npos) << e.what();
  }
}

TEST(Lifecycle, OnlyOwnerMayControl) {
  Platform p(small_scenario());
  auto id = run(p, run_request("alice", "mnist"));
  EXPECT_EQ(code_of([&] { call(p, [&](SessionManager& sm, Effects& fx) { return sm.stop("carol", id, fx); }); }),
            ErrorCode::PermissionDenied);
}

TEST(Lifecycle, ResumeSplicesIntoUninterruptedStream) {
  Platform p(small_scenario(2, 4));
  auto r = run_request("alice", "mnist");
  r.profile.steps_total = 100;
  r.seed = 4242;
  auto whole = run(p, r);
  auto cut = run(p, r);
  ASSERT_TRUE(p.run_until([&] { return stream_of(p, cut).size() >= 40; }, 200'000));
  call(p, [&](SessionManager& sm, Effects& fx) { return sm.stop("alice", cut, fx); });
  auto stopped_at = p.with_state([&](const ControlState& st) { return st.session(cut).checkpoints.back().step; });
  EXPECT_GE(stopped_at, 40u);
  EXPECT_LT(stopped_at, 100u);
  EXPECT_EQ(call(p, [&](SessionManager& sm, Effects&) { return sm.resume("alice", cut); }), SessionState::Queued);
  ASSERT_TRUE(finish(p));
  EXPECT_EQ(state_of(p, cut), SessionState::Done);
  EXPECT_EQ(cut, "alice/mnist/2") << "resume keeps the session identity";
  auto a = stream_of(p, whole), b = stream_of(p, cut);
  EXPECT_EQ(a.size(), 100u);
  EXPECT_EQ(a, b);
}

TEST(Lifecycle, ResumeNeedsCheckpointAndStoppedOrFailed) {
  Platform p(small_scenario(1, 1));
  run(p, run_request("alice", "mnist"));
  auto q = run(p, run_request("alice", "mnist"));
  call(p, [&](SessionManager& sm, Effects& fx) { return sm.stop("alice", q, fx); });
  EXPECT_EQ(code_of([&] { call(p, [&](SessionManager& sm, Effects&) { return sm.resume("alice", q); }); }),
            ErrorCode::StateError);
}

TEST(Fork, OverrideChangesOnlyThatParam) {
  Platform p(small_scenario());
  auto parent = run(p, run_request("alice", "mnist", {{"lr", 0.1}, {"bs", std::int64_t{128}}}));
  ASSERT_TRUE(finish(p));
  auto child = call(p, [&](SessionManager& sm, Effects&) { return sm.fork("alice", parent, {{"lr", 0.01}}); });
  p.with_state([&](const ControlState& st) {
    const auto& c = st.session(child);
    EXPECT_EQ(c.parent, parent);
    EXPECT_EQ(c.config, (Config{{"lr", 0.01}, {"bs", std::int64_t{128}}}));
    EXPECT_EQ(st.lineage.at(child), parent);
    EXPECT_NE(c.seed, st.session(parent).seed);
    return 0;
  });
}

TEST(Fork, PinnedSeedReplaysParentAfterCheckpoint) {
  Platform p(small_scenario());
  auto r = run_request("alice", "mnist");
  r.profile.steps_total = 60;
  r.seed = 99;
  auto parent = run(p, r);
  ASSERT_TRUE(p.run_until([&] { return stream_of(p, parent).size() >= 25; }, 200'000));
  auto ck = p.with_state([&](const ControlState& st) { return st.session(parent).checkpoints.back().step; });
  auto child = call(p, [&](SessionManager& sm, Effects&) { return sm.fork("alice", parent, {}, 99); });
  ASSERT_TRUE(finish(p));
  auto cs = stream_of(p, child);
  EXPECT_EQ(cs.size(), 60u - ck);
  EXPECT_EQ(cs, after_step(stream_of(p, parent), ck));
}

TEST(Fork, QueuedParentWithoutCheckpointRejected) {
  Platform p(small_scenario());
  auto id = run(p, run_request("alice", "mnist"));
  EXPECT_EQ(code_of([&] { call(p, [&](SessionManager& sm, Effects&) { return sm.fork("alice", id, {}); }); }),
            ErrorCode::StateError);
}

TEST(Fork, UnknownParamRejected) {
  Platform p(small_scenario());
  auto id = run(p, run_request("alice", "mnist"));
  ASSERT_TRUE(finish(p));
  EXPECT_EQ(code_of([&] {
              call(p, [&](SessionManager& sm, Effects&) { return sm.fork("alice", id, {{"momentum", 0.9}}); });
            }),
            ErrorCode::InvalidArgument);
}

TEST(Fork, LineageSurvivesParentRemoval) {
  Platform p(small_scenario());
  auto a = run(p, run_request("alice", "mnist"));
  ASSERT_TRUE(finish(p));
  auto b = call(p, [&](SessionManager& sm, Effects&) { return sm.fork("alice", a, {}); });
  ASSERT_TRUE(finish(p));
  auto c = call(p, [&](SessionManager& sm, Effects&) { return sm.fork("alice", b, {}); });
  ASSERT_TRUE(finish(p));
  call(p, [&](SessionManager& sm, Effects&) { sm.rm("alice", a); return 0; });
  p.with_state([&](const ControlState& st) {
    EXPECT_EQ(st.lineage.at(b), a);
    EXPECT_EQ(st.lineage.at(c), b);
    // Walking parents always terminates.
    std::set<SessionId> seen;
    for (SessionId cur = c; st.lineage.count(cur); cur = st.lineage.at(cur)) EXPECT_TRUE(seen.insert(cur).second);
    return 0;
  });
}

TEST(Events, OrderedFilteredAndCounted) {
  Platform p(small_scenario());
  auto id = run(p, run_request("alice", "mnist"));
  ASSERT_TRUE(finish(p));
  auto evs = call(p, [&](SessionManager& sm, Effects&) { return sm.events("alice", id, std::string("accuracy")); });
  EXPECT_EQ(evs.size(), 20u);
  for (std::size_t i = 1; i < evs.size(); ++i) EXPECT_LT(evs[i - 1].step, evs[i].step);
  auto none = call(p, [&](SessionManager& sm, Effects&) { return sm.events("alice", id, std::string("loss")); });
  EXPECT_TRUE(none.empty());
  auto logs = call(p, [&](SessionManager& sm, Effects&) { return sm.logs("alice", id); });
  ASSERT_FALSE(logs.empty());
  for (std::size_t i = 1; i < logs.size(); ++i) EXPECT_LE(logs[i - 1].ts, logs[i].ts);
}

TEST(Events, TeamSharingRules) {
  Platform p(small_scenario());
  auto r = run_request("alice", "mnist");
  r.team = "vision";
  auto shared = run(p, r);
  auto own = run(p, run_request("alice", "mnist"));
  ASSERT_TRUE(finish(p));
  EXPECT_NO_THROW(call(p, [&](SessionManager& sm, Effects&) { return sm.events("bob", shared); }));
  EXPECT_EQ(code_of([&] { call(p, [&](SessionManager& sm, Effects&) { return sm.events("carol", shared); }); }),
            ErrorCode::PermissionDenied);
  EXPECT_EQ(code_of([&] { call(p, [&](SessionManager& sm, Effects&) { return sm.events("bob", own); }); }),
            ErrorCode::PermissionDenied);
}

class CompareTest : public ::testing::Test {
 protected:
  Platform p{small_scenario(2, 8)};
  CompareResult cmp(const std::vector<Config>& cfgs) {
    std::vector<SessionId> ids;
    for (const auto& c : cfgs) ids.push_back(run(p, run_request("alice", "mnist", c)));
    return call(p, [&](SessionManager& sm, Effects&) { return sm.compare("alice", ids); });
  }
};

TEST_F(CompareTest, SplitsCommonAndExclusive) {
  auto r = cmp({{{"lr", 0.1}, {"bs", std::int64_t{128}}}, {{"lr", 0.5}, {"bs", std::int64_t{128}}}});
  EXPECT_EQ(r.common, (Config{{"bs", std::int64_t{128}}}));
  EXPECT_EQ(r.columns, std::vector<std::string>{"lr"});
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.cells[0][0], ConfigValue(0.1));
  EXPECT_EQ(r.cells[1][0], ConfigValue(0.5));
}

TEST_F(CompareTest, IdenticalConfigsAllCommon) {
  auto r = cmp({{{"lr", 0.1}}, {{"lr", 0.1}}});
  EXPECT_EQ(r.common.size(), 1u);
  EXPECT_TRUE(r.columns.empty());
}

TEST_F(CompareTest, MissingParamIsAbsent) {
  auto r = cmp({{{"lr", 0.1}, {"wd", 0.001}}, {{"lr", 0.1}}});
  EXPECT_EQ(r.columns, std::vector<std::string>{"wd"});
  EXPECT_EQ(r.cells[0][0], ConfigValue(0.001));
  EXPECT_EQ(r.cells[1][0], std::nullopt);
}

TEST(Submit, MetricOrderComesFromDataset) {
  auto sc = small_scenario();
  sc.datasets.push_back(DatasetSpec{"housing", "alice", kGiB, std::nullopt, "mse", MetricOrder::Ascending});
  Platform p(sc);
  auto a = run(p, run_request("alice", "mnist"));
  auto b = run(p, run_request("alice", "housing"));
  ASSERT_TRUE(finish(p));
  auto sa = call(p, [&](SessionManager& sm, Effects&) { return sm.submit("alice", a); });
  auto sb = call(p, [&](SessionManager& sm, Effects&) { return sm.submit("alice", b); });
  EXPECT_EQ(sa.order, MetricOrder::Descending);
  EXPECT_EQ(sa.metric_name, "accuracy");
  EXPECT_EQ(sb.order, MetricOrder::Ascending);
  EXPECT_EQ(sb.metric_name, "mse");
}

TEST(Submit, ResubmissionScoresIdenticallyAndAppendsHistory) {
  Platform p(small_scenario());
  auto a = run(p, run_request("alice", "mnist"));
  ASSERT_TRUE(finish(p));
  auto s1 = call(p, [&](SessionManager& sm, Effects&) { return sm.submit("alice", a); });
  p.advance_by(1000);
  auto s2 = call(p, [&](SessionManager& sm, Effects&) { return sm.submit("alice", a, s1.checkpoint_id); });
  EXPECT_EQ(s1.score, s2.score);
  EXPECT_NE(s1.submission_id, s2.submission_id);
  auto lb = call(p, [&](SessionManager& sm, Effects&) { return sm.leaderboard("alice", "mnist"); });
  EXPECT_EQ(lb.history.at("alice").size(), 2u);
  EXPECT_EQ(lb.entries.size(), 1u);
}

TEST(Submit, MissingCheckpointRejected) {
  Platform p(small_scenario());
  auto a = run(p, run_request("alice", "mnist"));
  EXPECT_EQ(code_of([&] { call(p, [&](SessionManager& sm, Effects&) { return sm.submit("alice", a); }); }),
            ErrorCode::StateError);
  ASSERT_TRUE(finish(p));
  EXPECT_EQ(code_of([&] {
              call(p, [&](SessionManager& sm, Effects&) { return sm.submit("alice", a, std::string("c999")); });
            }),
            ErrorCode::NotFound);
}

TEST(Submit, SurvivesSessionRemoval) {
  Platform p(small_scenario());
  auto a = run(p, run_request("alice", "mnist"));
  ASSERT_TRUE(finish(p));
  call(p, [&](SessionManager& sm, Effects&) { return sm.submit("alice", a); });
  call(p, [&](SessionManager& sm, Effects&) { sm.rm("alice", a); return 0; });
  auto lb = call(p, [&](SessionManager& sm, Effects&) { return sm.leaderboard("alice", "mnist"); });
  ASSERT_EQ(lb.entries.size(), 1u);
  EXPECT_EQ(lb.entries[0].session, a);
}

class LeaderboardTest : public ::testing::Test {
 protected:
  Bench b;
  void SetUp() override {
    b.seed_users();
    b.manager.registry().push_dataset("alice", "housing", kGiB, Visibility::Public(), "mse", MetricOrder::Ascending);
  }
  void add(const UserId& u, const DatasetId& ds, double score, Timestamp ts) {
    Submission s;
    s.submission_id = "s" + std::to_string(b.state.next_submission);
    s.session_id = u + "/" + ds + "/1";
    s.user = u;
    s.dataset_id = ds;
    s.checkpoint_id = "c1";
    const auto& d = b.state.dataset(ds);
    s.metric_name = d.metric_name;
    s.order = d.order;
    s.score = score;
    s.timestamp = ts;
    b.journal.commit(rec::kSubmission, s.submission_id, Json{{"submission", s}});
  }
  std::vector<UserId> ranking(const DatasetId& ds) {
    std::vector<UserId> out;
    for (const auto& e : b.manager.leaderboard("root", ds).entries) out.push_back(e.user);
    return out;
  }
};

TEST_F(LeaderboardTest, DescendingHigherWins) {
  add("alice", "mnist", 0.8, 1);
  add("bob", "mnist", 0.9, 2);
  EXPECT_EQ(ranking("mnist"), (std::vector<UserId>{"bob", "alice"}));
  auto lb = b.manager.leaderboard("root", "mnist");
  EXPECT_EQ(lb.entries[0].rank, 1u);
  EXPECT_EQ(lb.entries[1].rank, 2u);
}

TEST_F(LeaderboardTest, AscendingLowerWins) {
  add("alice", "housing", 0.30, 1);
  add("bob", "housing", 0.25, 2);
  EXPECT_EQ(ranking("housing"), (std::vector<UserId>{"bob", "alice"}));
}

TEST_F(LeaderboardTest, TieGoesToEarlierSubmission) {
  add("bob", "mnist", 0.7, 5);
  add("alice", "mnist", 0.7, 3);
  EXPECT_EQ(ranking("mnist"), (std::vector<UserId>{"alice", "bob"}));
}

// Oracle: per user the best score (earliest on ties), then sort by
// (score under order, timestamp).
std::vector<std::pair<UserId, double>> oracle(const std::vector<Submission>& subs, MetricOrder order) {
  std::map<UserId, Submission> best;
  for (const auto& s : subs) {
    auto it = best.find(s.user);
    bool wins = it == best.end() ||
                (order == MetricOrder::Ascending ? s.score < it->second.score : s.score > it->second.score) ||
                (s.score == it->second.score && s.timestamp < it->second.timestamp);
    if (wins) best[s.user] = s;
  }
  std::vector<Submission> v;
  for (auto& [u, s] : best) v.push_back(s);
  std::sort(v.begin(), v.end(), [&](const Submission& a, const Submission& b) {
    if (a.score != b.score) return order == MetricOrder::Ascending ? a.score < b.score : a.score > b.score;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.user < b.user;
  });
  std::vector<std::pair<UserId, double>> out;
  for (const auto& s : v) out.emplace_back(s.user, s.score);
  return out;
}

TEST_F(LeaderboardTest, RandomSubmissionSetsMatchOracleAndNeverWorsen) {
  std::mt19937_64 rng(31337);
  const std::vector<UserId> users{"alice", "bob", "carol", "root"};
  Timestamp ts = 0;
  std::map<DatasetId, std::map<UserId, double>> previous;
  for (int i = 0; i < 300; ++i) {
    const DatasetId ds = rng() % 2 ? "mnist" : "housing";
    // Coarse scores make ties common.
    add(users[rng() % users.size()], ds, static_cast<double>(rng() % 8) / 8.0, ts += static_cast<Timestamp>(rng() % 3));
    for (const DatasetId d : {"mnist", "housing"}) {
      auto order = b.state.dataset(d).order;
      std::vector<Submission> subs;
      for (const auto& s : b.state.submissions)
        if (s.dataset_id == d) subs.push_back(s);
      auto lb = b.manager.leaderboard("root", d);
      std::vector<std::pair<UserId, double>> got;
      for (const auto& e : lb.entries) got.emplace_back(e.user, e.score);
      ASSERT_EQ(got, oracle(subs, order)) << "after " << i << " submissions";
      for (const auto& [u, score] : got) {
        auto prev = previous[d].find(u);
        if (prev != previous[d].end()) ASSERT_FALSE(better(order, prev->second, score)) << u << " got worse";
        previous[d][u] = score;
      }
    }
  }
}

SweepSpec grid_spec() {
  SweepSpec s;
  s.strategy = SweepStrategy::Grid;
  s.space["lr"].values = {0.1, 0.01};
  s.space["bs"].values = {std::int64_t{64}, std::int64_t{128}};
  s.dataset_id = "mnist";
  s.image_id = "base";
  s.profile = testing::quick_profile();
  return s;
}

TEST(Sweep, GridIsFullCartesianProduct) {
  auto cfgs = expand_sweep(grid_spec());
  ASSERT_EQ(cfgs.size(), 4u);
  std::set<Config> unique(cfgs.begin(), cfgs.end());
  EXPECT_EQ(unique.size(), 4u);
  // Deterministic order: parameters in name order, last varies fastest.
  EXPECT_EQ(cfgs[0], (Config{{"bs", std::int64_t{64}}, {"lr", 0.1}}));
  EXPECT_EQ(cfgs[1], (Config{{"bs", std::int64_t{64}}, {"lr", 0.01}}));
  EXPECT_EQ(cfgs[2], (Config{{"bs", std::int64_t{128}}, {"lr", 0.1}}));
}

TEST(Sweep, RandomDrawsAreReproducible) {
  SweepSpec s = grid_spec();
  s.strategy = SweepStrategy::Random;
  s.n = 5;
  s.space.clear();
  s.space["lr"].lo = 1e-4;
  s.space["lr"].hi = 1e-1;
  s.space["lr"].log_scale = true;
  s.space["opt"].values = {std::string("sgd"), std::string("adam")};
  s.seed = 17;
  auto a = expand_sweep(s), b = expand_sweep(s);
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a, b);
  for (const auto& c : a) {
    double lr = std::get<double>(c.at("lr"));
    EXPECT_GE(lr, 1e-4);
    EXPECT_LE(lr, 1e-1);
  }
  s.seed = 18;
  EXPECT_NE(expand_sweep(s), a);
}

TEST(Sweep, SpecValidation) {
  SweepSpec s = grid_spec();
  s.space.clear();
  EXPECT_THROW(validate(s), Error);
  s = grid_spec();
  s.strategy = SweepStrategy::Random;
  s.n = 0;
  EXPECT_THROW(validate(s), Error);
  s = grid_spec();
  s.strategy = SweepStrategy::Pbt;
  s.population = 1;
  EXPECT_THROW(validate(s), Error);
  s.population = 4;
  s.truncation_fraction = 0.6;
  EXPECT_THROW(validate(s), Error);
  s.truncation_fraction = 0.25;
  EXPECT_NO_THROW(validate(s));
}

TEST(Sweep, GridSpawnsFourAndFindsBest) {
  Platform p(small_scenario(2, 4));
  auto launch = call(p, [&](SessionManager& sm, Effects&) { return sm.sweep("alice", grid_spec()); });
  EXPECT_EQ(launch.sessions.size(), 4u);
  EXPECT_EQ(launch.rejected, 0u);
  ASSERT_TRUE(finish(p));
  auto best = call(p, [&](SessionManager& sm, Effects&) { return sm.sweep_best("alice", launch.sweep_id); });
  // The profile's optimum is lr = 0.01; the best member must use it.
  auto cfg = p.with_state([&](const ControlState& st) { return st.session(best.session).config; });
  EXPECT_EQ(cfg.at("lr"), ConfigValue(0.01));
}

TEST(Sweep, BudgetStopsAtCreditExhaustion) {
  auto sc = small_scenario(1, 4);
  sc.users[1].credit = 1;
  Platform p(sc);
  auto s = grid_spec();
  s.profile.steps_total = 200;
  auto launch = call(p, [&](SessionManager& sm, Effects&) { return sm.sweep("alice", s); });
  EXPECT_EQ(launch.sessions.size() + launch.rejected, 4u);
  // Spend the single credit; later launches are rejected for credit.
  p.advance_by(120'000);
  auto again = call(p, [&](SessionManager& sm, Effects&) {
    try {
      return sm.sweep("alice", s);
    } catch (const AdmissionRejected& e) {
      EXPECT_EQ(e.reason(), "CreditExhausted");
      return SweepLaunch{};
    }
  });
  EXPECT_TRUE(again.sessions.empty());
}

TEST(Sweep, PbtReplacesBottomQuartileWithPerturbedCopy) {
  Platform p(small_scenario(1, 8));
  SweepSpec s;
  s.strategy = SweepStrategy::Pbt;
  s.population = 4;
  s.truncation_fraction = 0.25;
  s.perturb_factors = {0.8, 1.2};
  s.space["lr"].values = {0.001, 0.003, 0.01, 0.03};
  s.seed = 5;
  s.dataset_id = "mnist";
  s.image_id = "base";
  s.profile = testing::quick_profile(50);
  auto launch = call(p, [&](SessionManager& sm, Effects&) { return sm.sweep("alice", s); });
  ASSERT_EQ(launch.sessions.size(), 4u);
  ASSERT_TRUE(finish(p));
  auto w = call(p, [&](SessionManager& sm, Effects&) { return sm.sweep_status("alice", launch.sweep_id); });
  auto interval = pbt_interval(s);
  EXPECT_EQ(interval, 5u);
  // Barriers at 5, 10, ..., 45.
  EXPECT_EQ(w.generation, 9u);
  std::map<int, int> per_gen;
  for (const auto& t : w.trace) {
    ++per_gen[t.at("generation").get<int>()];
    auto source = t.at("source").get<SessionId>();
    auto member = t.at("member").get<SessionId>();
    EXPECT_NE(source, member);
    EXPECT_TRUE(better(MetricOrder::Descending, t.at("source_score").get<double>(), t.at("member_score").get<double>()) ||
                t.at("source_score").get<double>() == t.at("member_score").get<double>());
    double factor = t.at("factors").at("lr").get<double>();
    EXPECT_TRUE(factor == 0.8 || factor == 1.2) << factor;
    EXPECT_NEAR(t.at("new_config").at("lr").get<double>(), t.at("source_config").at("lr").get<double>() * factor,
                1e-12);
  }
  for (int g = 1; g <= 9; ++g) EXPECT_EQ(per_gen[g], 1) << "generation " << g;
}

TEST(Notify, DoneSendsNothingFailureSendsOne) {
  Platform p(small_scenario());
  auto sink = std::make_shared<MemorySink>();
  p.notifier().add_sink(sink);
  auto ok = run(p, run_request("alice", "mnist"));
  auto r = run_request("bob", "mnist");
  r.profile.failure_at = 7;
  auto bad = run(p, r);
  ASSERT_TRUE(finish(p));
  EXPECT_EQ(state_of(p, ok), SessionState::Done);
  EXPECT_EQ(state_of(p, bad), SessionState::Failed);
  auto got = sink->received();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].session_id, bad);
  EXPECT_EQ(got[0].recipient, "bob");
  EXPECT_EQ(got[0].kind, NotificationKind::Failed);
}

class FlakySink final : public NotificationSink {
 public:
  explicit FlakySink(int failures) : failures_(failures) {}
  void deliver(const Notification& n) override {
    if (failures_-- > 0) throw std::runtime_error("sink down");
    got.push_back(n);
  }
  std::string name() const override { return "flaky"; }
  std::vector<Notification> got;

 private:
  int failures_;
};

TEST(Notify, SinkRetriedWithBoundedAttempts) {
  Notifier n(3);
  auto flaky = std::make_shared<FlakySink>(2);
  n.add_sink(flaky);
  EXPECT_TRUE(n.notify(Notification{"u", "u/d/1", NotificationKind::Failed, "x", 1}, 1));
  EXPECT_EQ(flaky->got.size(), 1u);
  auto dead = std::make_shared<FlakySink>(100);
  Notifier m(3);
  m.add_sink(dead);
  EXPECT_FALSE(m.notify(Notification{"u", "u/d/1", NotificationKind::Failed, "x", 1}, 1));
  EXPECT_EQ(m.stats().failed, 1u);
}

TEST(Notify, DuplicateDeliveriesSuppressed) {
  Notifier n;
  auto sink = std::make_shared<MemorySink>();
  n.add_sink(sink);
  Notification x{"u", "u/d/1", NotificationKind::NodeDead, "x", 5};
  n.notify(x, 1);
  n.notify(x, 2);
  EXPECT_EQ(sink->received().size(), 1u);
  n.notify(Notification{"u", "u/d/2", NotificationKind::NodeDead, "x", 5}, 1);
  EXPECT_EQ(sink->received().size(), 1u) << "older epoch is fenced";
}

TEST(Credit, ExhaustionSafeStopsAndBlocksNewRuns) {
  auto sc = small_scenario(1, 8);
  sc.users[1].credit = 3;  // alice
  Platform p(sc);
  auto sink = std::make_shared<MemorySink>();
  p.notifier().add_sink(sink);
  auto r = run_request("alice", "mnist", {{"lr", 0.01}}, 2);
  r.profile.steps_total = 1000;
  auto a = run(p, r), b = run(p, r);
  ASSERT_TRUE(p.run_until([&] { return state_of(p, a) == SessionState::Stopped; }, 200'000));
  p.with_state([&](const ControlState& st) {
    EXPECT_EQ(st.user("alice").credit_balance, 0);
    for (const auto& id : {a, b}) {
      EXPECT_EQ(st.session(id).state, SessionState::Stopped);
      EXPECT_FALSE(st.session(id).checkpoints.empty());
    }
    return 0;
  });
  std::size_t stops = 0;
  for (const auto& n : sink->received()) stops += n.kind == NotificationKind::CreditStop;
  EXPECT_EQ(stops, 2u);
  try {
    run(p, r);
    FAIL();
  } catch (const AdmissionRejected& e) {
    EXPECT_EQ(e.reason(), "CreditExhausted");
  }
}

TEST(Serve, DoneSessionServesDeterministically) {
  Platform p(small_scenario());
  auto a = run(p, run_request("alice", "mnist"));
  ASSERT_TRUE(finish(p));
  auto node = call(p, [&](SessionManager& sm, Effects& fx) { return sm.serve("alice", a, std::nullopt, fx); });
  EXPECT_FALSE(node.empty());
  EXPECT_EQ(state_of(p, a), SessionState::Serving);
  Json payload{{"image", {0, 1, 2}}};
  auto x = call(p, [&](SessionManager& sm, Effects&) { return sm.infer("alice", a, payload); });
  auto y = call(p, [&](SessionManager& sm, Effects&) { return sm.infer("alice", a, payload); });
  EXPECT_EQ(x.output, y.output);
  EXPECT_GT(x.latency_ms, 0);
  EXPECT_EQ(y.requests, 2u);
  // Serving can be stopped.
  call(p, [&](SessionManager& sm, Effects& fx) { return sm.stop("alice", a, fx); });
  EXPECT_EQ(state_of(p, a), SessionState::Stopped);
}

TEST(Serve, InferOnRunningIsStateError) {
  Platform p(small_scenario());
  auto a = run(p, run_request("alice", "mnist"));
  p.advance_by(5000);
  EXPECT_EQ(code_of([&] { call(p, [&](SessionManager& sm, Effects&) { return sm.infer("alice", a, Json{}); }); }),
            ErrorCode::StateError);
  EXPECT_EQ(code_of([&] {
              call(p, [&](SessionManager& sm, Effects&) { return sm.infer("alice", "alice/mnist/9", Json{}); });
            }),
            ErrorCode::NotFound);
}

TEST(Memo, AttachedInOrder) {
  Platform p(small_scenario());
  auto a = run(p, run_request("alice", "mnist"));
  call(p, [&](SessionManager& sm, Effects&) { sm.memo("alice", a, "one"); sm.memo("alice", a, "two"); return 0; });
  EXPECT_EQ(p.with_state([&](const ControlState& st) { return st.session(a).memos; }),
            (std::vector<std::string>{"one", "two"}));
}

}  // namespace
}  // namespace deskml
