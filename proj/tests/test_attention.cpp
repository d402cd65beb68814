#include <cmath>

#include "dafnet/attention.hpp"
#include "dafnet/errors.hpp"
#include "test_util.hpp"

using namespace dafnet;
using namespace dafnet::attention;
using testutil::random_tensor;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void set(Tensor t, std::vector<double> v) {
  ASSERT_EQ(t.numel(), v.size());
  std::copy(v.begin(), v.end(), t.mutable_values().begin());
}

}  // namespace

TEST(ChannelAttention, IdenticalChannelsGetEqualWeightsUnderSymmetricParams) {
  ParameterSet ps;
  Rng rng(1);
  auto p = ChannelAttentionParams::create(ps, "ca", 2, 1, rng);
  set(p.fc1_weight, {0.3, 0.3, -0.2, -0.2});
  set(p.fc2_weight, {0.5, -0.4, 0.5, -0.4});
  Tensor x = random_tensor({1, 3, 3}, rng);
  Tensor both = Tensor::from({2, 3, 3}, [&] {
    std::vector<double> v(x.values().begin(), x.values().end());
    v.insert(v.end(), x.values().begin(), x.values().end());
    return v;
  }());
  const Tensor w = channel_attention(both, p);
  EXPECT_EQ(w.values()[0], w.values()[1]);
}

TEST(ChannelAttention, ZeroFinalLayerGivesHalf) {
  ParameterSet ps;
  Rng rng(2);
  auto p = ChannelAttentionParams::create(ps, "ca", 8, 4, rng);
  set(p.fc2_weight, std::vector<double>(p.fc2_weight.numel(), 0.0));
  const Tensor w = channel_attention(random_tensor({8, 4, 4}, rng), p);
  for (double v : w.values()) EXPECT_EQ(v, 0.5);
}

TEST(ChannelAttention, HandComputedTwoChannelOracle) {
  ParameterSet ps;
  Rng rng(3);
  auto p = ChannelAttentionParams::create(ps, "ca", 2, 2, rng);  // hidden 1
  set(p.fc1_weight, {0.5, -1.0});
  set(p.fc1_bias, {2.0});
  set(p.fc2_weight, {1.5, -0.5});
  set(p.fc2_bias, {0.1, 0.2});
  const Tensor x = Tensor::from({2, 1, 1}, {1.0, 2.0});
  // avg = max = (1,2); hidden = relu(0.5 - 2 + 2) = 0.5; mlp = (0.85, -0.05); sum of both paths doubled.
  const Tensor w = channel_attention(x, p);
  EXPECT_NEAR(w.values()[0], sig(2 * 0.85), 1e-15);
  EXPECT_NEAR(w.values()[1], sig(2 * -0.05), 1e-15);
}

TEST(ChannelAttention, WrongChannelCountIsConfigError) {
  ParameterSet ps;
  Rng rng(4);
  auto p = ChannelAttentionParams::create(ps, "ca", 4, 2, rng);
  EXPECT_THROW(channel_attention(random_tensor({3, 2, 2}, rng), p), ConfigError);
}

TEST(SpatialAttention, ConstantInputGivesUniformInterior) {
  ParameterSet ps;
  Rng rng(5);
  auto p = SpatialAttentionParams::create(ps, "sa", 1, rng);  // 1x1 kernel: no border effects
  const Tensor m = spatial_attention(testutil::filled({4, 5, 5}, 0.7), p);
  ASSERT_EQ(m.shape(), (Shape{1, 5, 5}));
  for (double v : m.values()) EXPECT_EQ(v, m.values()[0]);
}

TEST(SpatialAttention, ZeroWeightsGiveHalf) {
  ParameterSet ps;
  Rng rng(6);
  auto p = SpatialAttentionParams::create(ps, "sa", 7, rng);
  set(p.weight, std::vector<double>(p.weight.numel(), 0.0));
  const Tensor m = spatial_attention(random_tensor({3, 6, 6}, rng), p);
  for (double v : m.values()) EXPECT_EQ(v, 0.5);
}

TEST(SpatialAttention, HandComputedFourValueOracle) {
  ParameterSet ps;
  Rng rng(7);
  auto p = SpatialAttentionParams::create(ps, "sa", 1, rng);
  set(p.weight, {0.25, 0.75});  // mean map weight, max map weight
  set(p.bias, {-0.1});
  const Tensor x = Tensor::from({1, 2, 2}, {1.0, -2.0, 0.5, 3.0});
  const Tensor m = spatial_attention(x, p);
  for (int i = 0; i < 4; ++i) {
    const double v = x.values()[i];
    EXPECT_NEAR(m.values()[i], sig(0.25 * v + 0.75 * v - 0.1), 1e-15);
  }
}

TEST(Eca, ZeroKernelHalvesInput) {
  ParameterSet ps;
  Rng rng(8);
  auto p = EcaParams::create(ps, "eca", 3, rng);
  set(p.weight, {0.0, 0.0, 0.0});
  Tensor x = random_tensor({8, 4, 4}, rng);
  const Tensor y = eca(x, p);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.values()[i], 0.5 * x.values()[i]);
}

TEST(Eca, HandComputedGates) {
  ParameterSet ps;
  Rng rng(9);
  auto p = EcaParams::create(ps, "eca", 3, rng);
  set(p.weight, {0.2, 1.0, -0.5});
  const Tensor x = Tensor::from({3, 1, 2}, {1.0, 3.0, -2.0, 0.0, 4.0, 4.0});
  const double m[3] = {2.0, -1.0, 4.0};  // channel means
  // Zero-padded cross-correlation across channels.
  const double z[3] = {1.0 * m[0] - 0.5 * m[1], 0.2 * m[0] + 1.0 * m[1] - 0.5 * m[2], 0.2 * m[1] + 1.0 * m[2]};
  const Tensor y = eca(x, p);
  for (int c = 0; c < 3; ++c)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(y.at(c, 0, j), x.at(c, 0, j) * sig(z[c]), 1e-15);
}

TEST(Eca, EvenKernelIsConfigError) {
  ParameterSet ps;
  Rng rng(10);
  EXPECT_THROW(EcaParams::create(ps, "eca", 4, rng), ConfigError);
}

TEST(GlobalAvgPool, ConstantAndArithmeticCases) {
  EXPECT_EQ(global_avg_pool(testutil::filled({2, 3, 3}, 2.5)).values()[1], 2.5);
  EXPECT_EQ(global_avg_pool(Tensor::from({1, 2, 2}, {1, 3, 5, 7})).values()[0], 4.0);
}
