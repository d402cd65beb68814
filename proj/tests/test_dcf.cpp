#include <cmath>

#include "dafnet/dcf.hpp"
#include "dafnet/errors.hpp"
#include "dafnet/ops.hpp"
#include "test_util.hpp"

using namespace dafnet;
using namespace dafnet::dcf;
using testutil::random_tensor;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void set(Tensor t, std::vector<double> v) {
  ASSERT_EQ(t.numel(), v.size());
  std::copy(v.begin(), v.end(), t.mutable_values().begin());
}

void copy_into(Tensor dst, const Tensor& src) {
  std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
}

struct Fixture {
  ParameterSet ps;
  Rng rng{11};
  DcfParams params;
  explicit Fixture(int c, DcfMode mode = DcfMode::full, Hyper hyper = {}) {
    params = DcfParams::create(ps, "dcf", c, c, mode, hyper, rng);
  }
};

}  // namespace

TEST(CrossAttend, EqualInputsWithMirroredParamsGiveEqualOutputs) {
  Fixture f(4);
  auto& cr = *f.params.cross;
  copy_into(cr.ca_rgb.fc1_weight, cr.ca_depth.fc1_weight);
  copy_into(cr.ca_rgb.fc1_bias, cr.ca_depth.fc1_bias);
  copy_into(cr.ca_rgb.fc2_weight, cr.ca_depth.fc2_weight);
  copy_into(cr.ca_rgb.fc2_bias, cr.ca_depth.fc2_bias);
  copy_into(cr.sa_rgb.weight, cr.sa_depth.weight);
  copy_into(cr.sa_rgb.bias, cr.sa_depth.bias);
  Tensor x = random_tensor({4, 8, 8}, f.rng);
  const auto out = cross_attend({x, x, 1}, cr);
  ASSERT_EQ(out.r_prime.shape(), (Shape{4, 8, 8}));
  testutil::expect_all_eq(out.r_prime.values(), out.d_prime.values());
}

TEST(CrossAttend, MatchesCompositionOfAttentionOracles) {
  Fixture f(2);
  Tensor xc = random_tensor({2, 2, 2}, f.rng), xd = random_tensor({2, 2, 2}, f.rng);
  const auto& cr = *f.params.cross;
  const auto out = cross_attend({xc, xd, 1}, cr);
  const Tensor sa_d = attention::spatial_attention(xd, cr.sa_depth), sa_c = attention::spatial_attention(xc, cr.sa_rgb);
  const Tensor ca_d = attention::channel_attention(xd, cr.ca_depth), ca_c = attention::channel_attention(xc, cr.ca_rgb);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        EXPECT_NEAR(out.r_prime.at(c, i, j), sa_d.at(0, i, j) * xc.at(c, i, j) * ca_d.values()[c], 1e-15);
        EXPECT_NEAR(out.d_prime.at(c, i, j), sa_c.at(0, i, j) * xd.at(c, i, j) * ca_c.values()[c], 1e-15);
      }
}

TEST(CrossAttend, ShapeMismatchIsContractViolation) {
  Fixture f(4);
  EXPECT_THROW(cross_attend({random_tensor({4, 4, 4}, f.rng), random_tensor({4, 2, 4}, f.rng), 1}, *f.params.cross),
               ContractViolation);
}

TEST(Affinity, SingleChannelIsOne) {
  Fixture f(1);
  const auto a = affinity({random_tensor({1, 3, 3}, f.rng), random_tensor({1, 3, 3}, f.rng), 1}, *f.params.daw);
  ASSERT_EQ(a.f_a.shape(), (Shape{1, 1}));
  EXPECT_EQ(a.f_a.values()[0], 1.0);
}

TEST(Affinity, RowsAreStochastic) {
  for (int trial = 0; trial < 20; ++trial) {
    Fixture f(6);
    const auto a = affinity({random_tensor({6, 5, 4}, f.rng, 3.0), random_tensor({6, 5, 4}, f.rng, 3.0), 2},
                            *f.params.daw);
    for (int r = 0; r < 6; ++r) {
      double sum = 0.0;
      for (int c = 0; c < 6; ++c) {
        const double v = a.f_a.values()[r * 6 + c];
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    EXPECT_EQ(a.f_a2.shape(), (Shape{6, 5, 4}));
  }
}

TEST(Affinity, HandComputedTwoByTwo) {
  Fixture f(2);
  auto& d = *f.params.daw;
  set(d.proj_depth_weight, {1, 0, 0, 1});
  set(d.proj_rgb_weight, {1, 0, 0, 1});
  set(d.proj_depth_bias, {0, 0});
  set(d.proj_rgb_bias, {0, 0});
  const Tensor xd = Tensor::from({2, 1, 1}, {1, 0}), xc = Tensor::from({2, 1, 1}, {0, 1});
  const auto a = affinity({xc, xd, 1}, d);
  // Pd Pc^T = [[0,1],[0,0]].
  const double e = std::exp(1.0);
  const double expect_fa[4] = {1 / (1 + e), e / (1 + e), 0.5, 0.5};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a.f_a.values()[i], expect_fa[i], 1e-15);
  // F_a (Pd + Pc) with Pd + Pc = (1,1): row sums.
  EXPECT_NEAR(a.f_a2.values()[0], 1.0, 1e-15);
  EXPECT_NEAR(a.f_a2.values()[1], 1.0, 1e-15);
}

TEST(DepthConfidence, ZeroFinalLayerGivesHalfAndRangeHolds) {
  Fixture f(4);
  set(f.params.daw->mlp2_weight, std::vector<double>(f.params.daw->mlp2_weight.numel(), 0.0));
  EXPECT_EQ(depth_confidence({random_tensor({4, 3, 3}, f.rng), random_tensor({4, 3, 3}, f.rng), 1}, *f.params.daw)
                .item(),
            0.5);
  for (int t = 0; t < 20; ++t) {
    Fixture g(4);
    const double q =
        depth_confidence({random_tensor({4, 3, 3}, g.rng, 5.0), random_tensor({4, 3, 3}, g.rng, 5.0), 1}, *g.params.daw)
            .item();
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
  }
}

TEST(DepthConfidence, ScalarChainOracle) {
  Fixture f(2, DcfMode::full, {4, 7, 2});  // hidden 1
  auto& d = *f.params.daw;
  set(d.proj_depth_weight, {1, 0, 0, 1});
  set(d.proj_rgb_weight, {1, 0, 0, 1});
  set(d.proj_depth_bias, {0, 0});
  set(d.proj_rgb_bias, {0, 0});
  set(d.mlp1_weight, {0.5, -0.25});
  set(d.mlp1_bias, {0.1});
  set(d.mlp2_weight, {2.0});
  set(d.mlp2_bias, {-0.3});
  const Tensor xd = Tensor::from({2, 1, 1}, {1, 0}), xc = Tensor::from({2, 1, 1}, {0, 1});
  // f_a2 = (1,1); pooled = f_a2 + xd + xc = (2,2); hidden = relu(1 - 0.5 + 0.1) = 0.6.
  EXPECT_NEAR(depth_confidence({xc, xd, 1}, d).item(), sig(2.0 * 0.6 - 0.3), 1e-15);
}

TEST(Fuse, GatingIdentitiesAndAffinity) {
  Fixture f(3);
  for (int t = 0; t < 10; ++t) {
    const auto att = cross_attend({random_tensor({3, 4, 4}, f.rng), random_tensor({3, 4, 4}, f.rng), 1}, *f.params.cross);
    testutil::expect_all_eq(fuse(att, Tensor::scalar(0.0)).values(), att.r_prime.values());
    const Tensor one = fuse(att, Tensor::scalar(1.0));
    const Tensor quarter = fuse(att, Tensor::scalar(0.25));
    const Tensor three = fuse(att, Tensor::scalar(0.75));
    for (std::size_t i = 0; i < one.numel(); ++i) {
      const double r = att.r_prime.values()[i], d = att.d_prime.values()[i];
      EXPECT_EQ(one.values()[i], d + r);
      EXPECT_NEAR(quarter.values()[i], 0.25 * d + r, 1e-12);
      EXPECT_NEAR(three.values()[i] - quarter.values()[i], 0.5 * d, 1e-12);
    }
  }
}

TEST(UpdateDepthStream, AdditiveIdentities) {
  Rng rng(5);
  Tensor xd = random_tensor({2, 3, 3}, rng), xf = random_tensor({2, 3, 3}, rng);
  testutil::expect_all_eq(update_depth_stream(xd, Tensor::zeros({2, 3, 3})).values(), xd.values());
  const Tensor cancelled = update_depth_stream(xd, ops::scale(xd, -1.0));
  for (double v : cancelled.values()) EXPECT_EQ(v, 0.0);
  const Tensor s = update_depth_stream(xd, xf);
  for (std::size_t i = 0; i < s.numel(); ++i) EXPECT_EQ(s.values()[i], xd.values()[i] + xf.values()[i]);
  EXPECT_THROW(update_depth_stream(xd, random_tensor({2, 3, 2}, rng)), ContractViolation);
}

TEST(DcfForward, NoDawEqualsFuseWithUnitQ) {
  Fixture f(4, DcfMode::no_daw);
  EXPECT_FALSE(f.params.daw.has_value());
  const StagePair pair{random_tensor({4, 4, 4}, f.rng), random_tensor({4, 4, 4}, f.rng), 2};
  const auto out = dcf_forward(pair, f.params, DcfMode::no_daw);
  testutil::expect_all_eq(out.fused.values(), fuse(cross_attend(pair, *f.params.cross), Tensor::scalar(1.0)).values());
  EXPECT_EQ(out.q.item(), 1.0);
}

TEST(DcfForward, NoCaSaUsesRawFeatures) {
  Fixture f(4, DcfMode::no_ca_sa);
  EXPECT_FALSE(f.params.cross.has_value());
  const StagePair pair{random_tensor({4, 4, 4}, f.rng), random_tensor({4, 4, 4}, f.rng), 1};
  const auto out = dcf_forward(pair, f.params, DcfMode::no_ca_sa);
  const double q = out.q.item();
  for (std::size_t i = 0; i < out.fused.numel(); ++i)
    EXPECT_NEAR(out.fused.values()[i], q * pair.depth.values()[i] + pair.rgb.values()[i], 1e-12);
}

TEST(DcfForward, LargeNegativeBiasSuppressesDepth) {
  Fixture f(4);
  set(f.params.daw->mlp2_bias, {-60.0});
  const StagePair pair{random_tensor({4, 4, 4}, f.rng), random_tensor({4, 4, 4}, f.rng), 1};
  const auto out = dcf_forward(pair, f.params, DcfMode::full);
  const auto att = cross_attend(pair, *f.params.cross);
  EXPECT_LT(out.q.item(), 1e-20);
  testutil::expect_all_near(out.fused.values(), att.r_prime.values(), 1e-20);
  for (std::size_t i = 0; i < out.fused.numel(); ++i)
    EXPECT_EQ(out.next_depth.values()[i], pair.depth.values()[i] + out.fused.values()[i]);
}

TEST(DcfForward, BaselineIsOneByOneOverConcat) {
  Fixture f(3, DcfMode::baseline);
  const StagePair pair{random_tensor({3, 4, 4}, f.rng), random_tensor({3, 4, 4}, f.rng), 1};
  const auto out = dcf_forward(pair, f.params, DcfMode::baseline);
  const Tensor expect = ops::conv2d(ops::concat0({pair.rgb, pair.depth}), f.params.baseline->weight, f.params.baseline->bias);
  testutil::expect_all_eq(out.fused.values(), expect.values());
}

TEST(DcfForward, DawSourceReplacesThePairForConfidenceOnly) {
  Fixture f(4);
  const StagePair pair{random_tensor({4, 4, 4}, f.rng), random_tensor({4, 4, 4}, f.rng), 2};
  const StagePair source{random_tensor({4, 4, 4}, f.rng), random_tensor({4, 4, 4}, f.rng), 1};
  const auto out = dcf_forward(pair, f.params, DcfMode::full, &source);
  EXPECT_EQ(out.q.item(), depth_confidence(source, *f.params.daw).item());
  testutil::expect_all_eq(out.fused.values(), fuse(cross_attend(pair, *f.params.cross), out.q).values());
}

TEST(DcfForward, MissingParameterGroupIsConfigError) {
  Fixture f(4, DcfMode::no_daw);
  const StagePair pair{random_tensor({4, 2, 2}, f.rng), random_tensor({4, 2, 2}, f.rng), 1};
  EXPECT_THROW(dcf_forward(pair, f.params, DcfMode::full), ConfigError);
  EXPECT_THROW(parse_dcf_mode("half"), ConfigError);
}
