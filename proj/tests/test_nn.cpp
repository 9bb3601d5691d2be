#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ifo/error.hpp"
#include "ifo/nn/layers.hpp"
#include "ifo/nn/network.hpp"
#include "support/attention_oracle.hpp"
#include "support/gradcheck.hpp"

using namespace ifo;
using ad::Tape;
using ad::Tensor;
using nn::NetOptions;
using nn::Role;
using test_support::attention_oracle;
using test_support::max_gradient_error;
using test_support::random_tensor;

namespace {

nn::Network small_net(bool attention, std::uint64_t seed = 1) {
  Rng rng(seed);
  NetOptions opt;
  opt.hidden = 4;
  opt.attention = attention;
  return nn::Network::build(nn::build_vector_net(Role::Policy, 3, 2, opt), rng);
}

}  // namespace

TEST(SelfAttention, IdentityAtInitialisation) {
  Rng rng(1);
  const auto layer = nn::SelfAttentionLayer::init(6, 2, 1, rng);
  EXPECT_EQ(layer.gate.item(), 0.0);
  const Tensor x = random_tensor({3, 12}, rng, -2, 2, false);
  Tape tape(false);
  const Tensor y = layer.forward(tape, x);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            std::vector<double>(x.data().begin(), x.data().end()));
}

TEST(SelfAttention, MatchesLoopOracle) {
  Rng rng(2);
  for (std::size_t channels : {1u, 2u, 4u}) {
    for (std::size_t reduction : {1u, 2u}) {
      if (channels % reduction) continue;
      auto layer = nn::SelfAttentionLayer::init(5, channels, reduction, rng);
      layer.gate.data()[0] = 0.7;
      const Tensor x = random_tensor({2, 5 * channels}, rng, -1.5, 1.5, false);
      Tape tape(false);
      const Tensor y = layer.forward(tape, x);
      for (std::size_t b = 0; b < 2; ++b) {
        const auto row = x.data().subspan(b * layer.width(), layer.width());
        const auto expected = attention_oracle(layer, row);
        for (std::size_t k = 0; k < expected.size(); ++k)
          EXPECT_NEAR(y.data()[b * layer.width() + k], expected[k], 1e-12) << channels << "/" << reduction;
      }
    }
  }
}

TEST(SelfAttention, GateGradientIsFeatureMapSum) {
  Rng rng(3);
  auto layer = nn::SelfAttentionLayer::init(4, 1, 1, rng);
  const Tensor x = random_tensor({1, 4}, rng, -1, 1, false);
  Tape tape;
  tape.backward(tape.sum(layer.forward(tape, x)));
  // y = x + gate * a, so dL/dgate = sum(a); recover a from the oracle with gate 1.
  layer.gate.data()[0] = 1.0;
  const auto with_gate = attention_oracle(layer, x.data());
  double expected = 0.0;
  for (std::size_t k = 0; k < 4; ++k) expected += with_gate[k] - x.data()[k];
  EXPECT_NEAR(layer.gate.grad()[0], expected, 1e-12);
  EXPECT_NE(layer.gate.grad()[0], 0.0);
}

TEST(SelfAttention, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  auto layer = nn::SelfAttentionLayer::init(3, 2, 1, rng);
  layer.gate.data()[0] = 0.5;
  Tensor x = random_tensor({2, 6}, rng);
  const Tensor w = random_tensor({2, 6}, rng, -1, 1, false);
  auto loss = [&](Tape& t) { return t.sum(t.mul(layer.forward(t, x), w)); };
  std::vector<Tensor> wrt = layer.parameters();
  wrt.push_back(x);
  EXPECT_LE(max_gradient_error(loss, wrt), 1e-4);
}

TEST(SelfAttention, AcrossShapes) {
  const auto check = test_support::run_attention_checks(5);
  EXPECT_TRUE(check.identity_exact);
  EXPECT_LE(check.oracle_error, 1e-12);
  EXPECT_LE(check.gradient_error, 1e-4);
}

TEST(SelfAttention, ConfigurationErrors) {
  Rng rng(5);
  EXPECT_THROW(nn::SelfAttentionLayer::init(4, 3, 2, rng), ConfigError);
  EXPECT_THROW(nn::SelfAttentionLayer::init(0, 1, 1, rng), ConfigError);
  const auto layer = nn::SelfAttentionLayer::init(4, 1, 1, rng);
  Tape tape(false);
  EXPECT_THROW(layer.forward(tape, Tensor::zeros({1, 5})), DimensionError);
}

TEST(VectorNet, PolicyTopologyWithAttention) {
  const auto spec = nn::build_vector_net(Role::Policy, 4, 2, {});
  EXPECT_EQ(spec.input_dim, 4u);
  EXPECT_EQ(spec.output_dim, 2u);
  ASSERT_EQ(spec.layers.size(), 7u);
  const std::vector<nn::LayerKind> kinds{nn::LayerKind::Dense,     nn::LayerKind::Attention,
                                         nn::LayerKind::Dense,     nn::LayerKind::Attention,
                                         nn::LayerKind::Dense,     nn::LayerKind::Dense,
                                         nn::LayerKind::Dense};
  for (std::size_t i = 0; i < kinds.size(); ++i) EXPECT_EQ(spec.layers[i].kind, kinds[i]) << i;
  EXPECT_EQ(spec.attention_layers(), 2u);
  EXPECT_FALSE(spec.layers.back().activation);
  EXPECT_EQ(spec.layers[1].positions, 12u);
}

TEST(VectorNet, IdmReadsConcatenatedPair) {
  const auto spec = nn::build_vector_net(Role::Idm, 6, 3, {});
  EXPECT_EQ(spec.input_dim, 12u);
  EXPECT_EQ(spec.output_dim, 3u);
}

TEST(VectorNet, WithoutAttentionHasFiveDenseLayers) {
  NetOptions opt;
  opt.attention = false;
  const auto spec = nn::build_vector_net(Role::Policy, 2, 3, opt);
  EXPECT_EQ(spec.layers.size(), 5u);
  EXPECT_EQ(spec.attention_layers(), 0u);
}

TEST(VectorNet, InvalidOptions) {
  EXPECT_THROW(nn::build_vector_net(Role::Policy, 0, 2), ConfigError);
  EXPECT_THROW(nn::build_vector_net(Role::Policy, 4, 1), ConfigError);
  NetOptions opt;
  opt.hidden = 10;
  opt.attention_channels = 4;
  EXPECT_THROW(nn::build_vector_net(Role::Policy, 4, 2, opt), ConfigError);
}

TEST(Network, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  NetOptions opt;
  opt.hidden = 4;
  opt.attention_channels = 2;
  const auto net = nn::Network::build(nn::build_vector_net(Role::Idm, 2, 3, opt), rng);
  for (const auto& layer : net.layers()) {
    if (auto* sa = std::get_if<nn::SelfAttentionLayer>(&layer)) Tensor(sa->gate).data()[0] = 0.3;
  }
  const Tensor x = random_tensor({5, 4}, rng, -1, 1, false);
  const std::vector<int> labels{0, 1, 2, 2, 0};
  auto loss = [&](Tape& t) { return t.cross_entropy(net.forward_logits(t, x), labels); };
  EXPECT_LE(max_gradient_error(loss, net.parameters()), 1e-4);
}

TEST(Network, BatchedAndSingleRowLogitsAgree) {
  const auto net = small_net(true);
  Rng rng(7);
  const Tensor x = random_tensor({4, 3}, rng, -1, 1, false);
  Tape tape(false);
  const Tensor batched = net.forward_logits(tape, x);
  for (std::size_t r = 0; r < 4; ++r) {
    const auto single = net.logits(x.data().subspan(r * 3, 3));
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(batched.data()[r * 2 + k], single[k], 1e-12);
  }
}

TEST(Network, SameSeedSameWeights) {
  const auto a = nn::to_json(small_net(true, 9));
  const auto b = nn::to_json(small_net(true, 9));
  const auto c = nn::to_json(small_net(true, 10));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Network, ArgmaxTiesResolveToLowestId) {
  const std::vector<double> tied{0.5, 1.0, 1.0};
  EXPECT_EQ(nn::Network::argmax(tied), 1);
  const std::vector<double> flat{0.0, 0.0};
  EXPECT_EQ(nn::Network::argmax(flat), 0);
}

TEST(Network, InputWidthMismatchIsDimensionError) {
  const auto net = small_net(false);
  const std::vector<double> row(4, 0.0);
  EXPECT_THROW(net.predict(row), DimensionError);
}

TEST(Network, NormalisationIsAppliedBeforeFirstLayer) {
  auto net = small_net(false);
  auto shifted = net.clone();
  shifted.set_input_normalization({1, 2, 3}, {2, 2, 2});
  const std::vector<double> raw{3, 6, 9}, standardised{1, 2, 3};
  EXPECT_EQ(shifted.logits(raw), net.logits(standardised));
  EXPECT_THROW(shifted.set_input_normalization({1}, {1}), DimensionError);
}

TEST(Network, CloneIsDeep) {
  const auto net = small_net(true);
  auto copy = net.clone();
  copy.parameters()[0].data()[0] += 1.0;
  EXPECT_NE(net.parameters()[0].data()[0], copy.parameters()[0].data()[0]);
}

TEST(Network, JsonRoundTripIsExact) {
  auto net = small_net(true);
  net.set_input_normalization({0.1, 0.2, 0.3}, {1.0 / 3.0, 2.0, 7.0});
  for (const auto& layer : net.layers()) {
    if (auto* sa = std::get_if<nn::SelfAttentionLayer>(&layer)) Tensor(sa->gate).data()[0] = 0.123456789;
  }
  const auto text = nn::to_json(net).dump();
  const auto back = nn::network_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.spec(), net.spec());
  EXPECT_EQ(nn::to_json(back).dump(), text);
  const std::vector<double> row{0.4, -0.3, 2.0};
  EXPECT_EQ(back.logits(row), net.logits(row));
}

TEST(Network, JsonWithWrongShapeIsRejected) {
  auto j = nn::to_json(small_net(false));
  j["parameters"][0]["shape"] = {5, 3};
  EXPECT_THROW(nn::network_from_json(j), DimensionError);
  j = nn::to_json(small_net(false));
  j["parameters"].erase(0);
  EXPECT_THROW(nn::network_from_json(j), DimensionError);
}
