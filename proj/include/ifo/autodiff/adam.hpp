#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ifo/autodiff/tensor.hpp"
#include "ifo/error.hpp"

namespace ifo::ad {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  AdamOptions options;

  static AdamState for_params(std::span<const Tensor> params, AdamOptions options = {}) {
    AdamState state;
    state.options = options;
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
    return state;
  }
};

/// One bias-corrected Adam update using each parameter's accumulated gradient.
/// Parameters that never received a gradient are treated as having zero gradient.
inline void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) +
                         " parameters but state tracks " +
                         std::to_string(state.first_moment.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != state.first_moment[i].size() ||
        params[i].size() != state.second_moment[i].size()) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " has shape " +
                           to_string(params[i].shape()) + " but moments hold " +
                           std::to_string(state.first_moment[i].size()) + " entries");
    }
  }

  const auto& opt = state.options;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(opt.beta1, t);
  const double correction2 = 1.0 - std::pow(opt.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    auto w = params[i].data();
    const bool has = params[i].has_grad();
    std::span<const double> g = std::as_const(params[i]).grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has ? g[j] : 0.0;
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * gj;
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * gj * gj;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
}

}  // namespace ifo::ad
