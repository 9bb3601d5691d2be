#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ifo/autodiff/tape.hpp"
#include "ifo/autodiff/tensor.hpp"
#include "ifo/random.hpp"

namespace ifo::test_support {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(ad::element_count(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Relative error with the denominator floored, so that gradients that are
// zero up to rounding compare on an absolute scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between backward() and central differences over
/// every entry of every tensor in `wrt`. `loss` builds a scalar on the tape.
inline double max_gradient_error(const std::function<Tensor(Tape&)>& loss, std::vector<Tensor> wrt,
                                 double step = 1e-5) {
  for (auto& t : wrt) t.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto value = [&] {
    Tape tape(false);
    return loss(tape).item();
  };
  double worst = 0.0;
  for (auto& t : wrt) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = value();
      data[i] = saved - step;
      const double down = value();
      data[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

}  // namespace ifo::test_support
