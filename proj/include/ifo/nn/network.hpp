#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ifo/autodiff/tape.hpp"
#include "ifo/autodiff/tensor.hpp"
#include "ifo/error.hpp"
#include "ifo/nn/layers.hpp"
#include "ifo/random.hpp"

namespace ifo::nn {

enum class Role { Idm, Policy };

inline std::string_view to_string(Role role) { return role == Role::Idm ? "idm" : "policy"; }

inline Role role_from_string(std::string_view s) {
  if (s == "idm") return Role::Idm;
  if (s == "policy") return Role::Policy;
  throw ConfigError("unknown network role '" + std::string(s) + "'");
}

enum class LayerKind { Dense, Attention };

struct LayerDescriptor {
  LayerKind kind = LayerKind::Dense;
  std::size_t in = 0;
  std::size_t out = 0;
  bool activation = false;
  // Attention only.
  std::size_t positions = 0;
  std::size_t channels = 0;
  std::size_t reduction = 1;

  bool operator==(const LayerDescriptor&) const = default;
};

struct NetworkSpec {
  Role role = Role::Policy;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  double leaky_slope = 0.01;
  std::vector<LayerDescriptor> layers;

  bool operator==(const NetworkSpec&) const = default;

  std::size_t attention_layers() const {
    return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const auto& l) {
      return l.kind == LayerKind::Attention;
    }));
  }
};

struct NetOptions {
  std::size_t hidden = 12;
  bool attention = true;
  // An attention layer over a width-d activation sees d / channels positions.
  std::size_t attention_channels = 1;
  std::size_t attention_reduction = 1;
  double leaky_slope = 0.01;
};

/// Input -> FC -> SA -> FC -> SA -> FC -> FC -> Output, hidden layers with
/// leaky ReLU. The inverse dynamics model reads (s_t, s_{t+1}) concatenated,
/// the policy reads s_t; both emit one logit per action.
inline NetworkSpec build_vector_net(Role role, std::size_t state_dim, std::size_t action_count,
                                    const NetOptions& options = {}) {
  if (state_dim == 0) throw ConfigError("state_dim must be positive");
  if (action_count < 2) throw ConfigError("action_count must be at least 2");
  const std::size_t h = options.hidden;
  if (h == 0) throw ConfigError("hidden width must be positive");
  if (options.attention && (options.attention_channels == 0 || h % options.attention_channels)) {
    throw ConfigError("hidden width " + std::to_string(h) + " not divisible by attention channels " +
                      std::to_string(options.attention_channels));
  }

  NetworkSpec spec;
  spec.role = role;
  spec.input_dim = role == Role::Idm ? 2 * state_dim : state_dim;
  spec.output_dim = action_count;
  spec.leaky_slope = options.leaky_slope;

  auto dense = [&](std::size_t in, std::size_t out, bool act) {
    spec.layers.push_back({LayerKind::Dense, in, out, act, 0, 0, 1});
  };
  auto attention = [&] {
    if (!options.attention) return;
    spec.layers.push_back({LayerKind::Attention, h, h, false, h / options.attention_channels,
                           options.attention_channels, options.attention_reduction});
  };

  dense(spec.input_dim, h, true);
  attention();
  dense(h, h, true);
  attention();
  dense(h, h, true);
  dense(h, h, true);
  dense(h, action_count, false);
  return spec;
}

inline nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::Dense) {
      layers.push_back({{"kind", "dense"}, {"in", l.in}, {"out", l.out}, {"activation", l.activation}});
    } else {
      layers.push_back({{"kind", "attention"},
                        {"positions", l.positions},
                        {"channels", l.channels},
                        {"reduction", l.reduction}});
    }
  }
  return {{"role", to_string(spec.role)},
          {"input_dim", spec.input_dim},
          {"output_dim", spec.output_dim},
          {"leaky_slope", spec.leaky_slope},
          {"layers", layers}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.role = role_from_string(j.at("role").get<std::string>());
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.output_dim = j.at("output_dim").get<std::size_t>();
  spec.leaky_slope = j.at("leaky_slope").get<double>();
  for (const auto& l : j.at("layers")) {
    LayerDescriptor d;
    const auto kind = l.at("kind").get<std::string>();
    if (kind == "dense") {
      d.kind = LayerKind::Dense;
      d.in = l.at("in").get<std::size_t>();
      d.out = l.at("out").get<std::size_t>();
      d.activation = l.at("activation").get<bool>();
    } else if (kind == "attention") {
      d.kind = LayerKind::Attention;
      d.positions = l.at("positions").get<std::size_t>();
      d.channels = l.at("channels").get<std::size_t>();
      d.reduction = l.at("reduction").get<std::size_t>();
      d.in = d.out = d.positions * d.channels;
    } else {
      throw ConfigError("unknown layer kind '" + kind + "'");
    }
    spec.layers.push_back(d);
  }
  return spec;
}

/// A feed-forward network instantiated from a NetworkSpec, with an optional
/// fixed affine input normalisation (x - mean) / scale.
class Network {
 public:
  static Network build(const NetworkSpec& spec, Rng& rng) {
    Network net;
    net.spec_ = spec;
    std::size_t width = spec.input_dim;
    for (const auto& d : spec.layers) {
      if (d.in != width) {
        throw ConfigError("layer input " + std::to_string(d.in) +
                          " does not match previous output " + std::to_string(width));
      }
      if (d.kind == LayerKind::Dense) {
        net.layers_.emplace_back(DenseLayer::init(d.in, d.out, rng));
      } else {
        net.layers_.emplace_back(SelfAttentionLayer::init(d.positions, d.channels, d.reduction, rng));
      }
      width = d.out;
    }
    if (width != spec.output_dim) {
      throw ConfigError("network output " + std::to_string(width) + " does not match action count " +
                        std::to_string(spec.output_dim));
    }
    return net;
  }

  const NetworkSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t output_dim() const { return spec_.output_dim; }

  void set_input_normalization(std::vector<double> mean, std::vector<double> scale) {
    if (mean.size() != spec_.input_dim || scale.size() != spec_.input_dim) {
      throw DimensionError("normalisation vectors must have width " +
                           std::to_string(spec_.input_dim));
    }
    mean_ = std::move(mean);
    scale_ = std::move(scale);
  }
  const std::vector<double>& input_mean() const { return mean_; }
  const std::vector<double>& input_scale() const { return scale_; }

  /// Logits for a batch x[batch x input_dim].
  Tensor forward_logits(Tape& tape, const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != spec_.input_dim) {
      throw DimensionError("network expects input width " + std::to_string(spec_.input_dim) +
                           ", got " + ad::to_string(x.shape()));
    }
    Tensor h = normalize(x);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = std::visit([&](const auto& layer) { return layer.forward(tape, h); }, layers_[i]);
      if (spec_.layers[i].activation) h = tape.leaky_relu(h, spec_.leaky_slope);
    }
    return h;
  }

  std::vector<double> logits(std::span<const double> row) const {
    Tape tape(false);
    const Tensor x = Tensor::from({1, row.size()}, std::vector<double>(row.begin(), row.end()));
    const Tensor out = forward_logits(tape, x);
    return {out.data().begin(), out.data().end()};
  }

  /// Greedy action; ties resolve to the lowest action id.
  int predict(std::span<const double> row) const { return argmax(logits(row)); }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> params;
    for (const auto& layer : layers_) {
      auto p = std::visit([](const auto& l) { return l.parameters(); }, layer);
      params.insert(params.end(), p.begin(), p.end());
    }
    return params;
  }

  void zero_grad() const {
    for (auto p : parameters()) p.zero_grad();
  }

  Network clone() const {
    Network copy;
    copy.spec_ = spec_;
    copy.mean_ = mean_;
    copy.scale_ = scale_;
    for (const auto& layer : layers_) {
      copy.layers_.push_back(std::visit(
          [](const auto& l) -> Layer {
            auto c = l;
            if constexpr (std::is_same_v<std::decay_t<decltype(l)>, DenseLayer>) {
              c.weight = l.weight.clone();
              c.bias = l.bias.clone();
            } else {
              c.w_f = l.w_f.clone();
              c.w_g = l.w_g.clone();
              c.w_h = l.w_h.clone();
              c.w_v = l.w_v.clone();
              c.gate = l.gate.clone();
            }
            return c;
          },
          layer));
    }
    return copy;
  }

  // Layer access for tests and diagnostics.
  using Layer = std::variant<DenseLayer, SelfAttentionLayer>;
  const std::vector<Layer>& layers() const { return layers_; }

  static int argmax(std::span<const double> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (values[i] > values[best]) best = static_cast<int>(i);
    }
    return best;
  }

 private:
  Tensor normalize(const Tensor& x) const {
    if (mean_.empty()) return x;
    Tensor out = Tensor::zeros(x.shape());
    const std::size_t cols = x.dim(1);
    auto src = x.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const std::size_t c = i % cols;
      dst[i] = (src[i] - mean_[c]) / scale_[c];
    }
    return out;
  }

  NetworkSpec spec_;
  std::vector<Layer> layers_;
  std::vector<double> mean_;
  std::vector<double> scale_;
};

/// Network weights and normalisation as JSON. Values round-trip exactly.
inline nlohmann::json to_json(const Network& net) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : net.parameters()) {
    params.push_back({{"shape", p.shape()}, {"data", std::vector<double>(p.data().begin(), p.data().end())}});
  }
  return {{"spec", to_json(net.spec())},
          {"input_mean", net.input_mean()},
          {"input_scale", net.input_scale()},
          {"parameters", params}};
}

inline Network network_from_json(const nlohmann::json& j) {
  const NetworkSpec spec = spec_from_json(j.at("spec"));
  Rng rng(0);
  Network net = Network::build(spec, rng);
  const auto& params = j.at("parameters");
  auto targets = net.parameters();
  if (params.size() != targets.size()) {
    throw DimensionError("checkpoint holds " + std::to_string(params.size()) +
                         " parameter tensors, network expects " + std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto shape = params[i].at("shape").get<ad::Shape>();
    const auto data = params[i].at("data").get<std::vector<double>>();
    if (shape != targets[i].shape() || data.size() != targets[i].size()) {
      throw DimensionError("parameter " + std::to_string(i) + " has shape " + ad::to_string(shape) +
                           ", expected " + ad::to_string(targets[i].shape()));
    }
    std::copy(data.begin(), data.end(), targets[i].data().begin());
  }
  auto mean = j.at("input_mean").get<std::vector<double>>();
  auto scale = j.at("input_scale").get<std::vector<double>>();
  if (!mean.empty()) net.set_input_normalization(std::move(mean), std::move(scale));
  return net;
}

}  // namespace ifo::nn
