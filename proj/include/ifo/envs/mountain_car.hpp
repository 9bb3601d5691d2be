#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "ifo/envs/environment.hpp"
#include "ifo/random.hpp"

namespace ifo::envs {

struct MountainCarParams {
  double min_position = -1.2;
  double max_position = 0.6;
  double max_speed = 0.07;
  double goal_position = 0.5;
  double force = 0.001;
  double gravity = 0.0025;
  double reset_low = -0.6;
  double reset_high = -0.4;
  std::size_t max_steps = 200;
};

struct MountainCarState {
  double position = 0.0;
  double velocity = 0.0;
};

/// Under-powered car in a valley. Actions: 0 push left, 1 no push, 2 push right.
/// -1 reward per step until the car reaches the flag.
class MountainCar final : public Environment {
 public:
  explicit MountainCar(MountainCarParams params = {}) : params_(params) {}

  std::string id() const override { return "mountaincar"; }
  std::size_t action_count() const override { return 3; }
  std::size_t state_dim() const override { return 2; }
  std::size_t max_steps() const override { return params_.max_steps; }

  std::vector<double> observation() const override { return {state_.position, state_.velocity}; }

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<MountainCar>(*this);
  }

  const MountainCarState& state() const { return state_; }
  void set_state(const MountainCarState& s) { state_ = s; }
  const MountainCarParams& params() const { return params_; }

 protected:
  void do_reset(std::uint64_t seed) override {
    Rng rng(seed);
    state_ = {rng.uniform(params_.reset_low, params_.reset_high), 0.0};
  }

  std::pair<double, bool> do_step(int action) override {
    const auto& p = params_;
    double v = state_.velocity + (action - 1) * p.force - std::cos(3.0 * state_.position) * p.gravity;
    v = std::clamp(v, -p.max_speed, p.max_speed);
    double x = std::clamp(state_.position + v, p.min_position, p.max_position);
    if (x == p.min_position && v < 0.0) v = 0.0;
    state_ = {x, v};
    return {-1.0, x >= p.goal_position};
  }

  bool goal_reached() const override { return state_.position >= params_.goal_position; }

 private:
  MountainCarParams params_;
  MountainCarState state_;
};

}  // namespace ifo::envs
