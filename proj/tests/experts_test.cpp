#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "hmagat/experts.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmagat;
using experts::Preference;
using mapf::Action;
using mapf::Cell;
using mapf::Instance;

namespace {

Instance make_instance(const std::vector<std::string>& rows, std::vector<Cell> starts, std::vector<Cell> goals) {
  Instance inst{testutil::parse_rows(rows), std::move(starts), std::move(goals)};
  inst.validate();
  return inst;
}

// Three agents contending for the top row.
Instance group_instance() {
  return make_instance({"....", ".@..", "..@@"}, {{0, 1}, {2, 1}, {0, 0}}, {{3, 0}, {2, 0}, {1, 0}});
}

long long individual_sum(const Instance& inst) {
  long long sum = 0;
  for (int i = 0; i < inst.num_agents(); ++i) sum += mapf::bfs_dist(inst.map, inst.goals[i])(inst.starts[i]);
  return sum;
}

Preference ranking(std::initializer_list<Action> head) {
  Preference p{};
  int k = 0;
  for (Action a : head) p[k++] = a;
  for (Action a : mapf::kAllActions) {
    if (std::find(p.begin(), p.begin() + k, a) == p.begin() + k) p[k++] = a;
  }
  return p;
}

}  // namespace

TEST(JointOptimal, SingleAgentOnLine) {
  const auto inst = make_instance({"...."}, {{0, 0}}, {{3, 0}});
  const auto r = experts::joint_optimal(inst);
  ASSERT_TRUE(r.success);
  EXPECT_EQ(r.soc, 3);
  EXPECT_TRUE(oracle::conflict_free(inst.map, r.trajectory));
}

TEST(JointOptimal, SwapThroughPocketCostsMoreThanIndividualPaths) {
  const auto inst = make_instance({".....", "@@.@@"}, {{0, 0}, {4, 0}}, {{4, 0}, {0, 0}});
  const auto r = experts::joint_optimal(inst);
  ASSERT_TRUE(r.success);
  EXPECT_GT(r.soc, individual_sum(inst));
  EXPECT_EQ(r.soc, oracle::joint_soc_layered(inst, 20));
  EXPECT_TRUE(oracle::conflict_free(inst.map, r.trajectory));
  EXPECT_EQ(mapf::soc_metrics(r.trajectory, inst, 1000).soc, r.soc);
}

TEST(JointOptimal, GroupInstanceBeatsPibt) {
  const auto inst = group_instance();
  const auto joint = experts::joint_optimal(inst);
  const auto pibt = experts::pibt_expert(inst, 256, 0);
  ASSERT_TRUE(joint.success);
  ASSERT_TRUE(pibt.success);
  EXPECT_EQ(joint.soc, oracle::joint_soc_layered(inst, 16));
  EXPECT_LT(joint.soc, pibt.soc);
  EXPECT_TRUE(oracle::conflict_free(inst.map, pibt.trajectory));
}

TEST(JointOptimal, InfeasibleInstance) {
  const auto inst = make_instance({".@."}, {{0, 0}}, {{2, 0}});
  EXPECT_FALSE(experts::joint_optimal(inst).success);
}

TEST(JointOptimal, ResourceLimits) {
  EXPECT_THROW(experts::joint_optimal(make_instance({"....."}, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}},
                                                    {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}})),
               experts::ResourceLimitError);
  Instance big{mapf::GridMap(9, 8), {{0, 0}}, {{8, 7}}};
  EXPECT_THROW(experts::joint_optimal(big), experts::ResourceLimitError);
  EXPECT_THROW(experts::joint_optimal(group_instance(), 3), experts::ResourceLimitError);
}

TEST(JointOptimal, MatchesLayeredOracleAndBoundsPibt) {
  std::mt19937_64 rng(21);
  int solved = 0;
  for (int trial = 0; solved < 200; ++trial) {
    const int side = 3 + static_cast<int>(rng() % 3);
    const int agents = 1 + static_cast<int>(rng() % 3);
    const auto inst = testutil::random_instance(side, side, 0.2, agents, rng);
    const auto joint = experts::joint_optimal(inst);
    const auto pibt = experts::pibt_expert(inst, 256, trial);
    EXPECT_TRUE(oracle::conflict_free(inst.map, pibt.trajectory));
    if (!joint.success) {
      EXPECT_FALSE(pibt.success) << trial;
      continue;
    }
    ++solved;
    EXPECT_TRUE(oracle::conflict_free(inst.map, joint.trajectory));
    EXPECT_EQ(mapf::soc_metrics(joint.trajectory, inst, 1000).soc, joint.soc);
    EXPECT_LE(joint.soc, pibt.soc) << trial;
    if (side <= 4 && trial % 4 == 0) {
      EXPECT_EQ(joint.soc, oracle::joint_soc_layered(inst, static_cast<int>(joint.soc))) << trial;
    }
  }
}

TEST(Pibt, AllStayKeepsConfiguration) {
  const auto inst = group_instance();
  auto state = experts::PibtState::initial(inst);
  const std::vector<Preference> prefs(3, mapf::kAllActions);
  EXPECT_EQ(experts::pibt_step(inst.map, state, prefs), inst.starts);
}

TEST(Pibt, HeadOnSwapIsRefused) {
  const auto map = testutil::parse_rows({".."});
  Instance inst{map, {{0, 0}, {1, 0}}, {{1, 0}, {0, 0}}};
  auto state = experts::PibtState::initial(inst);
  const std::vector<Preference> prefs{ranking({Action::kRight}), ranking({Action::kLeft})};
  const auto next = experts::pibt_step(map, state, prefs);
  EXPECT_TRUE(mapf::validate_joint_move(map, inst.starts, next).empty());
  EXPECT_EQ(next, inst.starts);
}

TEST(Pibt, SingleAgentTakesTopFeasiblePreference) {
  const auto map = testutil::parse_rows({"...", ".@.", "..."});
  Instance inst{map, {{0, 1}}, {{2, 2}}};
  auto state = experts::PibtState::initial(inst);
  // Left is off the map and Right is an obstacle.
  auto next = experts::pibt_step(map, state, {ranking({Action::kLeft, Action::kRight, Action::kDown})});
  EXPECT_EQ(next[0], (Cell{0, 2}));
  next = experts::pibt_step(map, state, {ranking({Action::kRight})});
  EXPECT_EQ(next[0], (Cell{1, 2}));
}

TEST(Pibt, HigherPriorityPushesLowerPriorityAside) {
  const auto map = testutil::parse_rows({"...", "@.@"});
  Instance inst{map, {{0, 0}, {1, 0}}, {{2, 0}, {1, 1}}};
  auto state = experts::PibtState::initial(inst);
  // Agent 0 has the higher initial priority and wants agent 1's cell.
  const std::vector<Preference> prefs{ranking({Action::kRight}), ranking({Action::kStay})};
  const auto next = experts::pibt_step(map, state, prefs);
  EXPECT_EQ(next[0], (Cell{1, 0}));
  EXPECT_NE(next[1], (Cell{1, 0}));
  EXPECT_TRUE(mapf::validate_joint_move(map, inst.starts, next).empty());
}

TEST(Pibt, PrioritiesStayDistinctAndResetAtGoal) {
  std::mt19937_64 rng(3);
  const auto inst = testutil::random_instance(6, 6, 0.2, 5, rng);
  auto state = experts::PibtState::initial(inst);
  const auto dist = mapf::goal_distances(inst);
  for (int t = 0; t < 40; ++t) {
    std::vector<Preference> prefs;
    for (int i = 0; i < 5; ++i) prefs.push_back(experts::distance_preference(inst.map, dist[i], state.config[i], &rng));
    const auto before = state.config;
    experts::pibt_step(inst.map, state, prefs);
    std::set<double> distinct(state.priority.begin(), state.priority.end());
    EXPECT_EQ(distinct.size(), 5u);
    for (int i = 0; i < 5; ++i) {
      if (before[i] == inst.goals[i]) {
        EXPECT_LT(state.priority[i], 1.0);
      }
    }
  }
}

TEST(PibtExpert, SingleAgentFollowsShortestPath) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = testutil::random_instance(8, 8, 0.25, 1, rng);
    const auto r = experts::pibt_expert(inst, 256, trial);
    ASSERT_TRUE(r.success);
    EXPECT_EQ(r.soc, individual_sum(inst));
  }
}

TEST(PibtExpert, EmptyMapFourAgents) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = testutil::random_instance(8, 8, 0.0, 4, rng);
    const auto r = experts::pibt_expert(inst, 256, trial);
    EXPECT_TRUE(oracle::conflict_free(inst.map, r.trajectory));
    EXPECT_TRUE(r.success) << mapf::serialize_instance(inst);
  }
}

TEST(PibtExpert, ControllerReproducesExpert) {
  std::mt19937_64 rng(6);
  const auto inst = testutil::random_instance(8, 8, 0.2, 6, rng);
  experts::PibtController controller;
  const auto run = experts::rollout(controller, inst, 128, 9);
  const auto expert = experts::pibt_expert(inst, 128, 9);
  EXPECT_EQ(run.trajectory.configs, expert.trajectory.configs);
  EXPECT_EQ(run.soc, expert.soc);
}

TEST(PibtExpert, OrderedTiesIgnoreSeedAndPreferLowerActionIndex) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst = testutil::random_instance(8, 8, 0.2, 5, rng);
    const auto a = experts::pibt_expert(inst, 128, 1, experts::TieBreak::kActionOrder);
    const auto b = experts::pibt_expert(inst, 128, 2, experts::TieBreak::kActionOrder);
    EXPECT_EQ(a.trajectory.configs, b.trajectory.configs);
    EXPECT_TRUE(oracle::conflict_free(inst.map, a.trajectory));
  }
  // Up and Right both shorten the distance to the top-right corner; Up has the lower index.
  const auto inst = make_instance({"...", "...", "..."}, {{0, 2}}, {{2, 0}});
  const auto r = experts::pibt_expert(inst, 16, 0, experts::TieBreak::kActionOrder);
  ASSERT_TRUE(r.success);
  EXPECT_EQ(r.trajectory.actions[0][0], Action::kUp);
  EXPECT_EQ(r.trajectory.actions[1][0], Action::kUp);
  EXPECT_EQ(r.soc, 4);
}

TEST(Rollout, StayControllerIsChargedTheLimit) {
  const auto inst = make_instance({"...."}, {{0, 0}, {3, 0}}, {{1, 0}, {3, 0}});
  experts::StayController stay;
  const auto run = experts::rollout(stay, inst, 10, 0);
  EXPECT_FALSE(run.success);
  EXPECT_EQ(run.soc, 10 + 0);
  EXPECT_EQ(run.trajectory.length(), 10);
}

TEST(SampleRanking, IsPermutationWithSoftmaxLeader) {
  std::mt19937_64 rng(7);
  Eigen::RowVectorXd logits(5);
  logits << 1.0, 0.0, -0.5, 2.0, 0.3;
  const double tau = 0.8;
  std::map<Action, int> first;
  const int draws = 200000;
  for (int k = 0; k < draws; ++k) {
    const auto p = experts::sample_ranking(logits, tau, rng);
    std::set<Action> seen(p.begin(), p.end());
    ASSERT_EQ(seen.size(), 5u);
    ++first[p[0]];
  }
  const Eigen::RowVectorXd e = (logits / tau).array().exp();
  for (int a = 0; a < 5; ++a) {
    const double expected = e[a] / e.sum();
    EXPECT_NEAR(first[static_cast<Action>(a)] / static_cast<double>(draws), expected, 0.005);
  }
}

TEST(CollisionShield, PeakedLogitsAtLowTemperatureActLikeArgmax) {
  const auto map = testutil::parse_rows({"....", "....", "...."});
  Instance inst{map, {{0, 0}, {3, 2}}, {{3, 0}, {0, 2}}};
  auto state = experts::PibtState::initial(inst);
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(2, 5);
  logits(0, static_cast<int>(Action::kRight)) = 60.0;
  logits(1, static_cast<int>(Action::kUp)) = 60.0;
  std::mt19937_64 rng(8);
  for (int k = 0; k < 100; ++k) {
    auto s = state;
    const auto actions = experts::collision_shield(map, s, logits, {0.5, 0.5}, rng);
    EXPECT_EQ(actions[0], Action::kRight);
    EXPECT_EQ(actions[1], Action::kUp);
  }
}

TEST(CollisionShield, UniformLogitsAreReproducibleUnderSeed) {
  std::mt19937_64 gen(9);
  const auto inst = testutil::random_instance(8, 8, 0.2, 6, gen);
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(6, 5);
  const std::vector<double> tau(6, 1.0);
  auto run = [&](std::uint64_t seed) {
    auto state = experts::PibtState::initial(inst);
    std::mt19937_64 rng(seed);
    std::vector<std::vector<Action>> out;
    for (int t = 0; t < 20; ++t) out.push_back(experts::collision_shield(inst.map, state, logits, tau, rng));
    return out;
  };
  EXPECT_EQ(run(42), run(42));
  EXPECT_NE(run(42), run(43));
}

TEST(CollisionShield, DenseSweepHasNoConflicts) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::uniform_real_distribution<double> tau_dist(0.5, 1.0);
  int steps = 0;
  while (steps < 10000) {
    const auto inst = testutil::random_instance(6, 6, 0.3, 8, rng);
    auto state = experts::PibtState::initial(inst);
    for (int t = 0; t < 50; ++t, ++steps) {
      Eigen::MatrixXd logits = Eigen::MatrixXd::NullaryExpr(8, 5, [&] { return normal(rng); });
      std::vector<double> tau(8);
      for (double& v : tau) v = tau_dist(rng);
      const auto from = state.config;
      const auto actions = experts::collision_shield(inst.map, state, logits, tau, rng);
      for (int i = 0; i < 8; ++i) ASSERT_EQ(mapf::apply(from[i], actions[i]), state.config[i]);
      ASSERT_TRUE(oracle::conflicts(inst.map, from, state.config).empty());
    }
  }
}
