#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ifo/error.hpp"

namespace ifo::envs {

struct StepResult {
  std::vector<double> next_state;  // encoded observation
  double reward = 0.0;
  bool done = false;
  std::size_t steps_elapsed = 0;
};

/// Episodic discrete-action environment.
///
/// The base class owns the episode bookkeeping (step count, cap, return,
/// done flag) so every implementation enforces the same contracts: actions
/// must be in range, a finished episode cannot be stepped, and the goal
/// predicate is only defined once the episode is over.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual std::size_t action_count() const = 0;
  // Width of the encoded observation.
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t max_steps() const = 0;
  virtual std::vector<double> observation() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  std::vector<double> reset(std::uint64_t seed) {
    steps_ = 0;
    done_ = false;
    terminated_ = false;
    return_ = 0.0;
    do_reset(seed);
    return observation();
  }

  StepResult step(int action) {
    if (done_) throw ContractError(id() + ": step() called on a finished episode");
    if (action < 0 || static_cast<std::size_t>(action) >= action_count()) {
      throw ContractError(id() + ": action " + std::to_string(action) + " outside [0, " +
                          std::to_string(action_count()) + ")");
    }
    const auto [reward, terminal] = do_step(action);
    ++steps_;
    return_ += reward;
    terminated_ = terminal;
    done_ = terminal || steps_ >= max_steps();
    return {observation(), reward, done_, steps_};
  }

  bool done() const noexcept { return done_; }
  // True when the episode ended through the dynamics rather than the step cap.
  bool terminated() const noexcept { return terminated_; }
  std::size_t steps_elapsed() const noexcept { return steps_; }
  double episode_return() const noexcept { return return_; }

  bool goal_achieved() const {
    if (!done_) throw ContractError(id() + ": goal_achieved() on an unfinished episode");
    return goal_reached();
  }

 protected:
  Environment() = default;
  Environment(const Environment&) = default;
  Environment& operator=(const Environment&) = default;

  virtual void do_reset(std::uint64_t seed) = 0;
  // Returns (reward, terminal) for one transition.
  virtual std::pair<double, bool> do_step(int action) = 0;
  virtual bool goal_reached() const = 0;

 private:
  std::size_t steps_ = 0;
  bool done_ = false;
  bool terminated_ = false;
  double return_ = 0.0;
};

}  // namespace ifo::envs
