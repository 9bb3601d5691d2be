#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ifo/dataset/interaction.hpp"
#include "ifo/envs/registry.hpp"
#include "ifo/error.hpp"
#include "ifo/experts/experts.hpp"
#include "ifo/nn/network.hpp"
#include "ifo/random.hpp"

namespace ifo::training {

/// Chooses an action from the current environment and its observation. The
/// Rng is private to the episode, so actors that draw from it stay
/// schedule-independent.
using Actor = std::function<int(const envs::Environment&, std::span<const double>, Rng&)>;

inline Actor greedy_actor(const nn::Network& net) {
  return [&net](const envs::Environment&, std::span<const double> obs, Rng&) { return net.predict(obs); };
}

inline Actor expert_actor() {
  return [](const envs::Environment& env, std::span<const double>, Rng& rng) {
    return experts::expert_action(env, rng);
  };
}

inline Actor random_actor() {
  return [](const envs::Environment& env, std::span<const double>, Rng& rng) {
    return static_cast<int>(rng.below(env.action_count()));
  };
}

/// Worker count for episode rollouts: IFO_LAB_THREADS when set, else the
/// hardware concurrency, never more than the number of jobs.
inline std::size_t rollout_threads(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("IFO_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs job(i) for i in [0, count). Each index is handled exactly once and
/// results are expected to be stored by index, so the outcome does not depend
/// on the schedule. The first exception is rethrown after all workers stop.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = rollout_threads(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex guard;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(guard);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct Episode {
  std::vector<data::Interaction> steps;
  double episode_return = 0.0;
  bool success = false;
};

inline Episode run_episode(envs::Environment& env, const Actor& actor, std::uint64_t episode_seed,
                           std::uint64_t actor_seed, bool record) {
  Rng rng(actor_seed);
  Episode ep;
  std::vector<double> state = env.reset(episode_seed);
  while (!env.done()) {
    const int a = actor(env, state, rng);
    auto result = env.step(a);
    if (record) ep.steps.push_back({state, a, result.next_state, 0});
    state = std::move(result.next_state);
  }
  ep.episode_return = env.episode_return();
  ep.success = env.goal_achieved();
  return ep;
}

/// Seeds of the n episodes of one rollout batch. Evaluation and training
/// rollouts use separate streams so evaluation mazes are never trained on.
struct EpisodeSeeds {
  std::uint64_t master = 0;
  std::uint64_t stream = ifo::stream::kEvaluation;
  std::uint64_t batch = 0;

  std::uint64_t episode(std::size_t i) const {
    return derive_seed(derive_seed(master, stream, batch), 0, i);
  }
  std::uint64_t actor(std::size_t i) const {
    return derive_seed(derive_seed(master, stream, batch), 1, i);
  }
};

struct RolloutResult {
  data::InteractionSet pos;
  std::vector<double> returns;
  double aer = 0.0;
  double win_probability = 0.0;
};

/// Runs n episodes with `actor`, recording every transition. Run ids are
/// run_id_base + episode index; v_e is the goal predicate of each episode.
inline RolloutResult run_policy_episodes(const envs::Environment& prototype, const Actor& actor, std::size_t n,
                                         const EpisodeSeeds& seeds, std::int64_t run_id_base = 0,
                                         bool record = true) {
  if (n == 0) throw ContractError("run_policy_episodes needs n >= 1");
  std::vector<Episode> episodes(n);
  parallel_for(n, [&](std::size_t i) {
    auto env = prototype.clone();
    episodes[i] = run_episode(*env, actor, seeds.episode(i), seeds.actor(i), record);
  });

  RolloutResult out;
  out.pos.kind = data::SetKind::Pos;
  out.pos.env_id = prototype.id();
  out.pos.action_count = prototype.action_count();
  double total = 0.0;
  std::size_t wins = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += episodes[i].episode_return;
    wins += episodes[i].success;
    out.returns.push_back(episodes[i].episode_return);
    out.pos.add_run(run_id_base + static_cast<std::int64_t>(i), std::move(episodes[i].steps),
                    episodes[i].success);
  }
  out.aer = total / static_cast<double>(n);
  out.win_probability = static_cast<double>(wins) / static_cast<double>(n);
  return out;
}

inline RolloutResult run_policy_episodes(const std::string& env_id, const Actor& actor, std::size_t n,
                                         const EpisodeSeeds& seeds, std::int64_t run_id_base = 0,
                                         bool record = true) {
  return run_policy_episodes(*envs::make_env(env_id), actor, n, seeds, run_id_base, record);
}

inline constexpr std::size_t kEvaluationEpisodes = 100;

/// Returns and goal flags of the seeded evaluation episodes, without the transitions.
inline RolloutResult evaluate_episodes(const envs::Environment& prototype, const Actor& actor,
                                       std::size_t episodes = kEvaluationEpisodes, std::uint64_t seed = 0) {
  return run_policy_episodes(prototype, actor, episodes, {seed, ifo::stream::kEvaluation, 0}, 0, false);
}

inline RolloutResult evaluate_episodes(const std::string& env_id, const Actor& actor,
                                       std::size_t episodes = kEvaluationEpisodes, std::uint64_t seed = 0) {
  return evaluate_episodes(*envs::make_env(env_id), actor, episodes, seed);
}

/// Mean episode return over seeded evaluation episodes (a distinct maze per
/// episode for maze environments).
inline double evaluate_aer(const std::string& env_id, const Actor& actor,
                           std::size_t episodes = kEvaluationEpisodes, std::uint64_t seed = 0) {
  return evaluate_episodes(env_id, actor, episodes, seed).aer;
}

/// Average reward rescaled so that the random policy scores 0 and the expert 1.
inline double performance(double policy_aer, double random_aer, double expert_aer) {
  if (expert_aer == random_aer) {
    throw ValidationError("performance is undefined when expert and random AER are equal (" +
                          std::to_string(expert_aer) + ")");
  }
  return (policy_aer - random_aer) / (expert_aer - random_aer);
}

/// Expert and uniform-random AER on the evaluation episodes of one seed.
struct Baselines {
  double expert_aer = 0.0;
  double random_aer = 0.0;

  double performance_of(double aer) const { return performance(aer, random_aer, expert_aer); }
};

inline Baselines compute_baselines(const std::string& env_id, std::size_t episodes, std::uint64_t seed) {
  return {evaluate_aer(env_id, expert_actor(), episodes, seed),
          evaluate_aer(env_id, random_actor(), episodes, seed)};
}

}  // namespace ifo::training
