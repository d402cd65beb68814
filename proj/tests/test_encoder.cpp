#include <cmath>

#include "dafnet/encoder.hpp"
#include "dafnet/errors.hpp"
#include "dafnet/ops.hpp"
#include "test_util.hpp"

using namespace dafnet;
using namespace dafnet::encoder;
using testutil::random_tensor;

namespace {

EncoderConfig small_config(EncoderMode mode = EncoderMode::full) {
  EncoderConfig c;
  c.input_size = 64;
  c.rgb.stage_channels = c.depth.stage_channels = {8, 16, 32, 64};
  c.fusion.embed_dim = 16;
  c.mode = mode;
  return c;
}

struct Built {
  ParameterSet ps;
  TridentEncoder enc;
  explicit Built(const EncoderConfig& c, std::uint64_t seed = 3) {
    Rng rng(seed);
    enc = TridentEncoder(ps, "enc", c, rng);
  }
};

}  // namespace

TEST(Encoder, StageAndFusedShapes) {
  for (EncoderMode mode : {EncoderMode::full, EncoderMode::no_depth, EncoderMode::no_residual, EncoderMode::no_vit}) {
    Built b(small_config(mode));
    Rng rng(1);
    const auto out = b.enc.encode(random_tensor({3, 64, 64}, rng), random_tensor({1, 64, 64}, rng));
    const Shape expect[4] = {{8, 32, 32}, {16, 16, 16}, {32, 8, 8}, {64, 4, 4}};
    for (int i = 0; i < 4; ++i) EXPECT_EQ(out.rgb_stages[i].shape(), expect[i]) << to_string(mode);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(out.fused[i].shape(), expect[i + 1]) << to_string(mode);
  }
}

TEST(Encoder, NoDepthIgnoresDepthAndForwardsRgbStages) {
  Built b(small_config(EncoderMode::no_depth));
  Rng rng(2);
  const Tensor rgb = random_tensor({3, 64, 64}, rng);
  const auto a = b.enc.encode(rgb, random_tensor({1, 64, 64}, rng));
  const auto c = b.enc.encode(rgb, random_tensor({1, 64, 64}, rng, 7.0));
  for (int i = 0; i < 3; ++i) {
    testutil::expect_all_eq(a.fused[i].values(), c.fused[i].values());
    testutil::expect_all_eq(a.fused[i].values(), a.rgb_stages[i + 1].values());
  }
}

TEST(Encoder, DepthChangesFullModeOutput) {
  Built b(small_config());
  Rng rng(3);
  const Tensor rgb = random_tensor({3, 64, 64}, rng);
  const auto a = b.enc.encode(rgb, random_tensor({1, 64, 64}, rng));
  const auto c = b.enc.encode(rgb, random_tensor({1, 64, 64}, rng));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.fused[2].numel(); ++i) diff += std::abs(a.fused[2].values()[i] - c.fused[2].values()[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(Encoder, SameSeedSameOutputs) {
  Built a(small_config(), 9), b(small_config(), 9);
  Rng r1(4), r2(4);
  const auto oa = a.enc.encode(random_tensor({3, 64, 64}, r1), random_tensor({1, 64, 64}, r1));
  const auto ob = b.enc.encode(random_tensor({3, 64, 64}, r2), random_tensor({1, 64, 64}, r2));
  for (int i = 0; i < 3; ++i) testutil::expect_all_eq(oa.fused[i].values(), ob.fused[i].values());
  for (int i = 0; i < 4; ++i) EXPECT_EQ(oa.q_values[i].item(), ob.q_values[i].item());
}

TEST(Encoder, QValuesInUnitInterval) {
  Built b(small_config());
  Rng rng(5);
  const auto out = b.enc.encode(random_tensor({3, 64, 64}, rng), random_tensor({1, 64, 64}, rng));
  for (const auto& q : out.q_values) {
    EXPECT_GE(q.item(), 0.0);
    EXPECT_LE(q.item(), 1.0);
  }
}

TEST(Encoder, GradientsReachEveryParameterGroup) {
  Built b(small_config());
  Rng rng(6);
  const auto out = b.enc.encode(random_tensor({3, 64, 64}, rng), random_tensor({1, 64, 64}, rng));
  std::vector<Tensor> terms;
  for (const auto& f : out.fused) {
    std::vector<double> w(f.numel());
    std::normal_distribution<double> n;
    for (auto& v : w) v = n(rng);
    terms.push_back(ops::weighted_sum(f, w));
  }
  backward(ops::add_n(terms));
  for (const std::string group : {"enc.rgb.", "enc.depth.", "enc.dcf", "enc.fusion."}) {
    double total = 0.0;
    int seen = 0;
    for (const auto& e : b.ps.entries()) {
      if (e.name.rfind(group, 0) != 0) continue;
      ++seen;
      EXPECT_TRUE(e.tensor.has_grad()) << e.name;
      for (double g : e.tensor.grad()) total += std::abs(g);
    }
    EXPECT_GT(seen, 0) << group;
    EXPECT_GT(total, 0.0) << group;
  }
}

TEST(Encoder, BadInputSizeIsConfigError) {
  auto c = small_config();
  c.input_size = 60;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.daw_source_stage = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_encoder_mode("rgb_only"), ConfigError);
}

TEST(Backbone, ResnetParameterCountFormula) {
  for (auto channels : {std::array<int, 4>{8, 16, 32, 64}, {16, 32, 64, 128}}) {
    BackboneConfig cfg;
    cfg.stage_channels = channels;
    cfg.in_channels = 1;
    ParameterSet ps;
    Rng rng(1);
    const Backbone bb(ps, "bb", cfg, rng);
    std::size_t expect = 0;
    int in = 1;
    for (int c : channels) {
      expect += 9u * in * c + c;              // stride-2 3x3 entry conv
      expect += 11u * c * c + 4u * c;         // 1x1, 3x3, 1x1 convs and the output scale
      in = c;
    }
    EXPECT_EQ(bb.parameter_count(), expect);
    EXPECT_EQ(ps.scalar_count(), expect);
  }
}

TEST(Backbone, ZeroBlockScaleIsIdentityResidual) {
  for (BackboneVariant v : {BackboneVariant::resnet_like, BackboneVariant::res2net_like}) {
    BackboneConfig cfg;
    cfg.stage_channels = {8, 16, 32, 64};
    cfg.variant = v;
    ParameterSet ps;
    Rng rng(2);
    Backbone bb(ps, "bb", cfg, rng);
    auto& stage = bb.stages()[0];
    for (auto& block : stage.blocks) std::fill(block.gamma.mutable_values().begin(), block.gamma.mutable_values().end(), 0.0);
    const Tensor x = random_tensor({3, 16, 16}, rng);
    const Tensor expect = ops::relu(ops::conv2d(x, stage.down_weight, stage.down_bias, {2, 1, 1}));
    testutil::expect_all_eq(bb.run_stage(1, x).values(), expect.values());
  }
}

TEST(Backbone, Res2NetScalesProduceStageShapes) {
  for (int scale : {1, 2, 4}) {
    BackboneConfig cfg;
    cfg.stage_channels = {8, 16, 32, 64};
    cfg.variant = BackboneVariant::res2net_like;
    cfg.scale = scale;
    ParameterSet ps;
    Rng rng(3);
    const Backbone bb(ps, "bb", cfg, rng);
    const auto out = bb.run(random_tensor({3, 32, 32}, rng));
    EXPECT_EQ(out[0].shape(), (Shape{8, 16, 16}));
    EXPECT_EQ(out[3].shape(), (Shape{64, 2, 2}));
  }
}

TEST(FusionBranch, TokenCount) {
  EXPECT_EQ(token_count(8, 8, 2), 16);
  EXPECT_EQ(token_count(16, 8, 4), 8);
  EXPECT_EQ(token_count(4, 4, 1), 16);
  EXPECT_THROW(token_count(8, 8, 3), ConfigError);
}

TEST(FusionBranch, AbsentPreviousEqualsZeroPrevious) {
  FusionBranchConfig cfg;
  cfg.embed_dim = 8;
  ParameterSet ps;
  Rng rng(4);
  const auto p = FusionStageParams::create(ps, "fs", 2, FusionStageKind::transformer, 16, 8, 2, 8, 8, cfg, rng);
  const Tensor fused = random_tensor({16, 8, 8}, rng);
  const Tensor a = fusion_branch_stage(fused, Tensor(), p);
  const Tensor b = fusion_branch_stage(fused, Tensor::zeros({8, 16, 16}), p);
  ASSERT_EQ(a.shape(), (Shape{16, 8, 8}));
  testutil::expect_all_eq(a.values(), b.values());
  const Tensor c = fusion_branch_stage(fused, random_tensor({8, 16, 16}, rng), p);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.values()[i] - c.values()[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(FusionBranch, SelfAttentionUniformTokensAreFixedUnderIdentityMaps) {
  // Identical tokens attend uniformly, so the output is (t Wv + bv) Wo + bo for every row.
  FusionBranchConfig cfg;
  cfg.embed_dim = 4;
  ParameterSet ps;
  Rng rng(5);
  const auto p = FusionStageParams::create(ps, "fs", 1, FusionStageKind::transformer, 4, 0, 2, 4, 4, cfg, rng);
  const auto& att = p.blocks[0].attention;
  std::vector<double> row{0.3, -1.0, 2.0, 0.5}, tokens;
  for (int i = 0; i < 5; ++i) tokens.insert(tokens.end(), row.begin(), row.end());
  const Tensor out = self_attention(Tensor::from({5, 4}, tokens), att, 2);
  std::vector<double> v(4, 0.0), o(4, 0.0);
  for (int j = 0; j < 4; ++j) {
    v[j] = att.value_bias.values()[j];
    for (int k = 0; k < 4; ++k) v[j] += row[k] * att.value.values()[k * 4 + j];
  }
  for (int j = 0; j < 4; ++j) {
    o[j] = att.out_bias.values()[j];
    for (int k = 0; k < 4; ++k) o[j] += v[k] * att.out.values()[k * 4 + j];
  }
  for (int r = 0; r < 5; ++r)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(out.values()[r * 4 + j], o[j], 1e-12);
}
