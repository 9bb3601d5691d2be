#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "ifo/envs/environment.hpp"
#include "ifo/random.hpp"

namespace ifo::envs {

struct AcrobotParams {
  double dt = 0.2;
  double link_length_1 = 1.0;
  double link_mass_1 = 1.0;
  double link_mass_2 = 1.0;
  double link_com_1 = 0.5;
  double link_com_2 = 0.5;
  double link_moi = 1.0;
  double gravity = 9.8;
  double max_velocity_1 = 4.0 * std::numbers::pi;
  double max_velocity_2 = 9.0 * std::numbers::pi;
  double reset_range = 0.1;
  std::size_t max_steps = 500;
};

struct AcrobotState {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double theta1_dot = 0.0;
  double theta2_dot = 0.0;
};

/// Two-link underactuated pendulum with torque {-1, 0, +1} on the middle
/// joint, integrated with one RK4 step per action. The episode ends when the
/// tip rises one link length above the pivot.
class Acrobot final : public Environment {
 public:
  explicit Acrobot(AcrobotParams params = {}) : params_(params) {}

  std::string id() const override { return "acrobot"; }
  std::size_t action_count() const override { return 3; }
  std::size_t state_dim() const override { return 6; }
  std::size_t max_steps() const override { return params_.max_steps; }

  std::vector<double> observation() const override {
    return {std::cos(state_.theta1), std::sin(state_.theta1), std::cos(state_.theta2),
            std::sin(state_.theta2), state_.theta1_dot,       state_.theta2_dot};
  }

  std::unique_ptr<Environment> clone() const override { return std::make_unique<Acrobot>(*this); }

  const AcrobotState& state() const { return state_; }
  void set_state(const AcrobotState& s) { state_ = s; }

  bool tip_above_line() const {
    return -std::cos(state_.theta1) - std::cos(state_.theta2 + state_.theta1) > 1.0;
  }

 protected:
  void do_reset(std::uint64_t seed) override {
    Rng rng(seed);
    const double r = params_.reset_range;
    state_ = {rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r)};
  }

  std::pair<double, bool> do_step(int action) override {
    const double torque = static_cast<double>(action - 1);
    using Vec = std::array<double, 4>;
    const Vec s0{state_.theta1, state_.theta2, state_.theta1_dot, state_.theta2_dot};
    const double h = params_.dt;
    auto axpy = [](const Vec& a, double k, const Vec& b) {
      return Vec{a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]};
    };
    const Vec k1 = derivatives(s0, torque);
    const Vec k2 = derivatives(axpy(s0, h / 2.0, k1), torque);
    const Vec k3 = derivatives(axpy(s0, h / 2.0, k2), torque);
    const Vec k4 = derivatives(axpy(s0, h, k3), torque);
    Vec s1;
    for (std::size_t i = 0; i < 4; ++i) {
      s1[i] = s0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    state_.theta1 = wrap(s1[0]);
    state_.theta2 = wrap(s1[1]);
    state_.theta1_dot = std::clamp(s1[2], -params_.max_velocity_1, params_.max_velocity_1);
    state_.theta2_dot = std::clamp(s1[3], -params_.max_velocity_2, params_.max_velocity_2);
    const bool terminal = tip_above_line();
    return {terminal ? 0.0 : -1.0, terminal};
  }

  bool goal_reached() const override { return terminated(); }

 private:
  static double wrap(double x) {
    constexpr double lo = -std::numbers::pi, hi = std::numbers::pi, span = hi - lo;
    while (x > hi) x -= span;
    while (x < lo) x += span;
    return x;
  }

  std::array<double, 4> derivatives(const std::array<double, 4>& s, double torque) const {
    const auto& p = params_;
    const double m1 = p.link_mass_1, m2 = p.link_mass_2, l1 = p.link_length_1;
    const double lc1 = p.link_com_1, lc2 = p.link_com_2, i1 = p.link_moi, i2 = p.link_moi;
    const double g = p.gravity;
    const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];
    const double d1 = m1 * lc1 * lc1 +
                      m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
    const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
    const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - std::numbers::pi / 2.0);
    const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                        2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                        (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - std::numbers::pi / 2.0) + phi2;
    const double ddtheta2 =
        (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
        (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    return {dtheta1, dtheta2, ddtheta1, ddtheta2};
  }

  AcrobotParams params_;
  AcrobotState state_;
};

}  // namespace ifo::envs
