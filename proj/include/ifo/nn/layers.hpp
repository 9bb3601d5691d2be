#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ifo/autodiff/tape.hpp"
#include "ifo/autodiff/tensor.hpp"
#include "ifo/error.hpp"
#include "ifo/random.hpp"

namespace ifo::nn {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(ad::element_count(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

struct DenseLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  static DenseLayer init(std::size_t in, std::size_t out, Rng& rng) {
    return {fan_in_uniform({out, in}, in, rng), fan_in_uniform({out}, in, rng)};
  }

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor forward(Tape& tape, const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_features()) {
      throw DimensionError("dense layer expects width " + std::to_string(in_features()) +
                           ", got input " + ad::to_string(x.shape()));
    }
    return tape.add_bias(tape.matmul(x, weight, false, true), bias);
  }

  std::vector<Tensor> parameters() const { return {weight, bias}; }
};

/// Gated self-attention over the positions of a feature vector.
///
/// The input row of width positions * channels is viewed as `positions`
/// locations with `channels` features each. Keys f, queries g and values h are
/// linear maps to reduced_channels = channels / reduction. The attention
/// logits are s_ij = f(x_i) . g(x_j), normalised over i for each j; the
/// attended values are projected back by w_v and added to the input scaled by
/// the learnable gate, which starts at zero so the layer is an identity at
/// initialisation.
struct SelfAttentionLayer {
  std::size_t positions = 0;
  std::size_t channels = 1;
  std::size_t reduced_channels = 1;
  Tensor w_f;   // [reduced x channels]
  Tensor w_g;   // [reduced x channels]
  Tensor w_h;   // [reduced x channels]
  Tensor w_v;   // [channels x reduced]
  Tensor gate;  // [1]

  static SelfAttentionLayer init(std::size_t positions, std::size_t channels,
                                 std::size_t reduction, Rng& rng) {
    if (positions == 0 || channels == 0 || reduction == 0) {
      throw ConfigError("self-attention needs positive positions, channels and reduction");
    }
    if (channels % reduction != 0) {
      throw ConfigError("self-attention channels " + std::to_string(channels) +
                        " not divisible by reduction " + std::to_string(reduction));
    }
    SelfAttentionLayer layer;
    layer.positions = positions;
    layer.channels = channels;
    layer.reduced_channels = channels / reduction;
    const std::size_t rc = layer.reduced_channels;
    layer.w_f = fan_in_uniform({rc, channels}, channels, rng);
    layer.w_g = fan_in_uniform({rc, channels}, channels, rng);
    layer.w_h = fan_in_uniform({rc, channels}, channels, rng);
    layer.w_v = fan_in_uniform({channels, rc}, rc, rng);
    layer.gate = Tensor::scalar(0.0, true);
    return layer;
  }

  std::size_t width() const { return positions * channels; }

  Tensor forward(Tape& tape, const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != width()) {
      throw DimensionError("self-attention expects width " + std::to_string(width()) +
                           ", got input " + ad::to_string(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t n = positions, c = channels, rc = reduced_channels;
    const Tensor rows = tape.reshape(x, {batch * n, c});
    const Tensor keys = tape.reshape(tape.matmul(rows, w_f, false, true), {batch, n, rc});
    const Tensor queries = tape.reshape(tape.matmul(rows, w_g, false, true), {batch, n, rc});
    const Tensor values = tape.reshape(tape.matmul(rows, w_h, false, true), {batch, n, rc});
    // scores[b, i, j] = f(x_i) . g(x_j); attention[b, i, j] = beta_{j,i}.
    const Tensor scores = tape.bmm(keys, queries, false, true);
    const Tensor attention = tape.softmax(scores, 1);
    // attended[b, j] = sum_i beta_{j,i} h(x_i)
    const Tensor attended = tape.bmm(attention, values, true, false);
    const Tensor projected =
        tape.matmul(tape.reshape(attended, {batch * n, rc}), w_v, false, true);
    const Tensor feature_map = tape.reshape(projected, {batch, n * c});
    return tape.add(x, tape.mul_scalar(feature_map, gate));
  }

  std::vector<Tensor> parameters() const { return {w_f, w_g, w_h, w_v, gate}; }
};

}  // namespace ifo::nn
