#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ifo/dataset/interaction.hpp"
#include "ifo/dataset/io.hpp"
#include "ifo/envs/registry.hpp"
#include "ifo/error.hpp"
#include "ifo/random.hpp"

namespace ifo::experts {

using data::Trajectory;

// Push right when the pole leans or rotates to the right.
inline int cartpole_action(const envs::CartPoleState& s) {
  return s.theta + 0.5 * s.theta_dot > 0.0 ? 1 : 0;
}

// Pump energy: push in the direction of travel. At rest, push toward the
// valley floor so the first swing already builds momentum.
inline int mountain_car_action(const envs::MountainCarState& s) {
  if (s.velocity > 0.0) return 2;
  if (s.velocity < 0.0) return 0;
  return s.position < -0.5 ? 2 : 0;
}

// Bang-bang energy pumping on the first link. Positive elbow torque swings
// the first link backwards, so the torque opposes the sign of its velocity.
inline int acrobot_action(const envs::AcrobotState& s) {
  if (s.theta1_dot > 0.0) return 0;
  if (s.theta1_dot < 0.0) return 2;
  return 1;
}

/// First move of a shortest path to the goal. Among equally short moves the
/// choice is drawn from `ties`.
inline int maze_action(const envs::MazeObservation& m, Rng& ties) {
  const auto dist = envs::distances_to(m.layout, m.goal);
  const int here = dist[m.layout.index(m.agent)];
  int options[4];
  std::size_t count = 0;
  for (int d = 0; d < 4; ++d) {
    if (m.layout.blocked(m.agent, d)) continue;
    const auto n = envs::MazeLayout::neighbour(m.agent, d);
    if (m.layout.inside(n) && dist[m.layout.index(n)] == here - 1) options[count++] = d;
  }
  if (count == 0) return envs::kNorth;
  return options[ties.below(count)];
}

inline int expert_action(const envs::Environment& env, Rng& ties) {
  if (const auto* e = dynamic_cast<const envs::CartPole*>(&env)) return cartpole_action(e->state());
  if (const auto* e = dynamic_cast<const envs::MountainCar*>(&env)) {
    return mountain_car_action(e->state());
  }
  if (const auto* e = dynamic_cast<const envs::Acrobot*>(&env)) return acrobot_action(e->state());
  if (const auto* e = dynamic_cast<const envs::Maze*>(&env)) return maze_action(e->maze(), ties);
  throw ConfigError("no expert for environment '" + env.id() + "'");
}

/// One labelled expert episode.
inline Trajectory expert_rollout(envs::Environment& env, std::uint64_t episode_seed,
                                 std::uint64_t tie_seed) {
  Rng ties(tie_seed);
  Trajectory t;
  t.env_id = env.id();
  t.actions.emplace();
  t.states.push_back(env.reset(episode_seed));
  while (!env.done()) {
    const int a = expert_action(env, ties);
    t.actions->push_back(a);
    t.states.push_back(env.step(a).next_state);
  }
  t.episode_return = env.episode_return();
  t.success = env.goal_achieved();
  return t;
}

struct DemoOptions {
  // Consecutive demonstrations sharing one maze layout (different tie-breaks).
  std::size_t experts_per_layout = 1;
  bool keep_actions = false;
  // Failed attempts tolerated per requested episode before giving up.
  std::size_t retry_factor = 10;
};

/// Successful expert episodes, state-only unless keep_actions is set. Failed
/// attempts are re-rolled with fresh seeds.
inline std::vector<Trajectory> collect_expert_demos(envs::Environment& env, std::size_t n_episodes,
                                                    std::uint64_t seed, DemoOptions options = {}) {
  if (n_episodes == 0) throw ContractError("collect_expert_demos needs n_episodes >= 1");
  const std::string env_id = env.id();
  const std::size_t per_layout = std::max<std::size_t>(1, options.experts_per_layout);
  std::vector<Trajectory> demos;
  std::size_t attempts = 0, failures = 0;
  const std::size_t budget = options.retry_factor * n_episodes;
  while (demos.size() < n_episodes) {
    const std::uint64_t layout_index = attempts / per_layout;
    const std::uint64_t episode_seed = derive_seed(seed, stream::kExpertDemos, layout_index);
    const std::uint64_t tie_seed = derive_seed(seed, stream::kExpertTies, attempts);
    ++attempts;
    Trajectory t = expert_rollout(env, episode_seed, tie_seed);
    if (!t.success) {
      if (++failures > budget) {
        throw CollectionError("expert for '" + env_id + "' failed " + std::to_string(failures) +
                              " episodes collecting " + std::to_string(n_episodes) + " demonstrations");
      }
      continue;
    }
    demos.push_back(options.keep_actions ? std::move(t) : data::strip_actions(std::move(t)));
  }
  return demos;
}

inline std::vector<Trajectory> collect_expert_demos(const std::string& env_id, std::size_t n_episodes,
                                                    std::uint64_t seed, DemoOptions options = {}) {
  auto env = envs::make_env(env_id);
  return collect_expert_demos(*env, n_episodes, seed, options);
}

/// Uniform-random interaction with `env`, recorded as labelled
/// (s_t, a_t, s_{t+1}) triples across as many episodes as needed.
inline data::InteractionSet collect_pre_demos(envs::Environment& env, std::size_t n_interactions,
                                              std::uint64_t seed) {
  if (n_interactions == 0) throw ContractError("collect_pre_demos needs n_interactions >= 1");
  Rng actions(derive_seed(seed, stream::kRandomPolicy));
  data::InteractionSet set;
  set.kind = data::SetKind::Pre;
  set.env_id = env.id();
  set.action_count = env.action_count();
  std::int64_t run = 0;
  while (set.size() < n_interactions) {
    std::vector<double> state = env.reset(derive_seed(seed, stream::kPreDemos, static_cast<std::uint64_t>(run)));
    std::vector<data::Interaction> steps;
    while (!env.done() && set.size() + steps.size() < n_interactions) {
      const int a = static_cast<int>(actions.below(env.action_count()));
      auto result = env.step(a);
      steps.push_back({state, a, result.next_state, run});
      state = std::move(result.next_state);
    }
    const bool success = env.done() && env.goal_achieved();
    set.add_run(run, std::move(steps), success);
    ++run;
  }
  return set;
}

inline data::InteractionSet collect_pre_demos(const std::string& env_id, std::size_t n_interactions,
                                              std::uint64_t seed) {
  auto env = envs::make_env(env_id);
  return collect_pre_demos(*env, n_interactions, seed);
}

}  // namespace ifo::experts
