#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "ifo/envs/environment.hpp"
#include "ifo/random.hpp"

namespace ifo::envs {

struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_pole_length = 0.5;
  double force_magnitude = 10.0;
  double tau = 0.02;
  double x_threshold = 2.4;
  double theta_threshold = 12.0 * 2.0 * std::numbers::pi / 360.0;
  double reset_range = 0.05;
  std::size_t max_steps = 500;
  std::size_t goal_steps = 195;
};

struct CartPoleState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
};

/// Cart-pole balancing with explicit Euler integration. Action 0 pushes
/// left, action 1 pushes right; +1 reward per step.
class CartPole final : public Environment {
 public:
  explicit CartPole(CartPoleParams params = {}) : params_(params) {}

  std::string id() const override { return "cartpole"; }
  std::size_t action_count() const override { return 2; }
  std::size_t state_dim() const override { return 4; }
  std::size_t max_steps() const override { return params_.max_steps; }

  std::vector<double> observation() const override {
    return {state_.x, state_.x_dot, state_.theta, state_.theta_dot};
  }

  std::unique_ptr<Environment> clone() const override { return std::make_unique<CartPole>(*this); }

  const CartPoleState& state() const { return state_; }
  void set_state(const CartPoleState& s) { state_ = s; }
  const CartPoleParams& params() const { return params_; }

 protected:
  void do_reset(std::uint64_t seed) override {
    Rng rng(seed);
    const double r = params_.reset_range;
    state_ = {rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r)};
  }

  std::pair<double, bool> do_step(int action) override {
    const auto& p = params_;
    const double force = action == 1 ? p.force_magnitude : -p.force_magnitude;
    const double total_mass = p.cart_mass + p.pole_mass;
    const double pole_mass_length = p.pole_mass * p.half_pole_length;
    const double cos_t = std::cos(state_.theta);
    const double sin_t = std::sin(state_.theta);
    const double temp =
        (force + pole_mass_length * state_.theta_dot * state_.theta_dot * sin_t) / total_mass;
    const double theta_acc =
        (p.gravity * sin_t - cos_t * temp) /
        (p.half_pole_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

    state_.x += p.tau * state_.x_dot;
    state_.x_dot += p.tau * x_acc;
    state_.theta += p.tau * state_.theta_dot;
    state_.theta_dot += p.tau * theta_acc;

    const bool failed = std::abs(state_.x) > p.x_threshold ||
                        std::abs(state_.theta) > p.theta_threshold;
    return {1.0, failed};
  }

  bool goal_reached() const override { return steps_elapsed() >= params_.goal_steps; }

 private:
  CartPoleParams params_;
  CartPoleState state_;
};

}  // namespace ifo::envs
