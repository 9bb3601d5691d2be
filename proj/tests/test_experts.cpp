#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "ifo/envs/registry.hpp"
#include "ifo/error.hpp"
#include "ifo/experts/experts.hpp"
#include "ifo/training/rollout.hpp"

using namespace ifo;
using envs::make_env;

namespace {

double expert_aer(const std::string& env_id) {
  return training::evaluate_aer(env_id, training::expert_actor(), 100, 0);
}

}  // namespace

TEST(ExpertRules, SignExamples) {
  EXPECT_EQ(experts::cartpole_action({0.0, 0.0, 0.1, 0.5}), 1);
  EXPECT_EQ(experts::cartpole_action({0.0, 0.0, -0.1, -0.5}), 0);
  EXPECT_EQ(experts::mountain_car_action({-0.5, -0.01}), 0);
  EXPECT_EQ(experts::mountain_car_action({-0.5, 0.01}), 2);
  EXPECT_EQ(experts::acrobot_action({0.0, 0.0, 0.0, 0.0}), 1);
}

TEST(ExpertFloors, CartPoleIsPerfect) {
  const auto r = training::evaluate_episodes("cartpole", training::expert_actor(), 100, 0);
  EXPECT_EQ(r.aer, 500.0);
  EXPECT_EQ(r.win_probability, 1.0);
}

TEST(ExpertFloors, MountainCar) { EXPECT_GE(expert_aer("mountaincar"), -130.0); }

TEST(ExpertFloors, Acrobot) { EXPECT_GE(expert_aer("acrobot"), -120.0); }

TEST(ExpertFloors, MazesAlwaysSucceed) {
  for (const char* id : {"maze3", "maze5", "maze10"}) {
    const auto r = training::evaluate_episodes(id, training::expert_actor(), 100, 0);
    EXPECT_EQ(r.win_probability, 1.0) << id;
  }
}

TEST(MazeExpert, UniquePathLengthEqualsBfsDistance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = envs::generate_maze(5, seed, 0);
    envs::Maze env({5, 0}, m);
    const auto t = experts::expert_rollout(env, 0, seed);
    ASSERT_TRUE(t.success);
    EXPECT_EQ(static_cast<int>(t.transitions()), envs::distances_to(m.layout, m.goal)[0]);
  }
}

TEST(ExpertDemos, CartPoleDemosHaveFiveHundredAndOneStates) {
  const auto demos = experts::collect_expert_demos("cartpole", 100, 7);
  ASSERT_EQ(demos.size(), 100u);
  for (const auto& d : demos) {
    EXPECT_EQ(d.states.size(), 501u);
    EXPECT_TRUE(d.success);
    EXPECT_FALSE(d.actions.has_value());
  }
}

TEST(ExpertDemos, OnlySuccessfulEpisodesAreKept) {
  const auto demos = experts::collect_expert_demos("mountaincar", 30, 3);
  for (const auto& d : demos) {
    EXPECT_TRUE(d.success);
    EXPECT_GE(d.states.back()[0], 0.5);
  }
}

TEST(ExpertDemos, LabelledDemosReplay) {
  experts::DemoOptions opt;
  opt.keep_actions = true;
  for (const char* id : {"acrobot", "maze5"}) {
    const auto demos = experts::collect_expert_demos(id, 5, 11, opt);
    for (const auto& d : demos) {
      ASSERT_TRUE(d.actions.has_value());
      ASSERT_EQ(d.actions->size() + 1, d.states.size());
    }
    // Stripping keeps the states and drops only the labels.
    const auto stripped = experts::collect_expert_demos(id, 5, 11);
    for (std::size_t i = 0; i < demos.size(); ++i) EXPECT_EQ(stripped[i].states, demos[i].states);
  }
}

TEST(ExpertDemos, TenExpertsPerMazeShowAlternativeRoutes) {
  experts::DemoOptions opt;
  opt.experts_per_layout = 10;
  std::size_t layouts_with_alternatives = 0;
  const std::size_t layouts = 10;
  const auto demos = experts::collect_expert_demos("maze5", 10 * layouts, 5, opt);
  for (std::size_t l = 0; l < layouts; ++l) {
    std::set<std::vector<std::vector<double>>> paths;
    for (std::size_t k = 0; k < 10; ++k) {
      const auto& d = demos[l * 10 + k];
      // Same layout within a group: identical first observation.
      EXPECT_EQ(d.states.front(), demos[l * 10].states.front());
      paths.insert(d.states);
    }
    layouts_with_alternatives += paths.size() >= 2;
  }
  EXPECT_GE(layouts_with_alternatives, 1u);
}

TEST(ExpertDemos, DeterministicAndValidated) {
  EXPECT_EQ(experts::collect_expert_demos("maze3", 10, 4), experts::collect_expert_demos("maze3", 10, 4));
  EXPECT_THROW(experts::collect_expert_demos("maze3", 0, 4), ContractError);
  EXPECT_THROW(experts::collect_expert_demos("pong", 1, 4), ConfigError);
}

TEST(ExpertDemos, HopelessExpertRaisesCollectionError) {
  // The goal needs 195 steps but the episode is capped at 100.
  envs::CartPoleParams p;
  p.max_steps = 100;
  envs::CartPole env(p);
  experts::DemoOptions opt;
  opt.retry_factor = 3;
  EXPECT_THROW(experts::collect_expert_demos(env, 2, 0, opt), CollectionError);
}

TEST(PreDemos, TriplesReplayThroughTheEnvironment) {
  for (auto id : envs::kEnvironmentIds) {
    const auto set = experts::collect_pre_demos(std::string(id), 600, 9);
    ASSERT_EQ(set.size(), 600u);
    EXPECT_EQ(set.kind, data::SetKind::Pre);
    auto env = make_env(id);
    for (const auto& run : set.runs) {
      env->reset(derive_seed(9, stream::kPreDemos, static_cast<std::uint64_t>(run.run_id)));
      for (std::size_t i : run.indices) {
        const auto& it = set.interactions[i];
        EXPECT_EQ(env->observation(), it.state);
        EXPECT_EQ(env->step(it.action).next_state, it.next_state) << id;
      }
      if (env->done()) {
        EXPECT_EQ(run.success, env->goal_achieved()) << id;
      }
    }
  }
}

TEST(PreDemos, ActionFrequenciesAreUniform) {
  const std::size_t n = 10000;
  for (const char* id : {"cartpole", "acrobot", "maze5"}) {
    const auto set = experts::collect_pre_demos(id, n, 1);
    std::map<int, std::size_t> counts;
    for (const auto& it : set.interactions) ++counts[it.action];
    const double k = static_cast<double>(set.action_count);
    const double p = 1.0 / k;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (std::size_t a = 0; a < set.action_count; ++a)
      EXPECT_NEAR(static_cast<double>(counts[static_cast<int>(a)]), n * p, 3 * sigma) << id << " " << a;
  }
}

TEST(PreDemos, DeterministicForFixedSeed) {
  EXPECT_EQ(experts::collect_pre_demos("cartpole", 10000, 2), experts::collect_pre_demos("cartpole", 10000, 2));
  EXPECT_NE(experts::collect_pre_demos("cartpole", 100, 2), experts::collect_pre_demos("cartpole", 100, 3));
  EXPECT_THROW(experts::collect_pre_demos("cartpole", 0, 2), ContractError);
}
