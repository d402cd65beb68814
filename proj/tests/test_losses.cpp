#include <cmath>

#include "dafnet/errors.hpp"
#include "dafnet/losses.hpp"
#include "dafnet/ops.hpp"
#include "test_util.hpp"

using namespace dafnet;
using namespace dafnet::losses;
using testutil::random_tensor;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double naive_bce(const Tensor& z, const std::vector<double>& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double p = sig(z.values()[i]);
    acc -= t[i] * std::log(p) + (1 - t[i]) * std::log(1 - p);
  }
  return acc / static_cast<double>(t.size());
}

double naive_iou(const Tensor& z, const std::vector<double>& t) {
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double p = sig(z.values()[i]);
    inter += p * t[i];
    sp += p;
    sg += t[i];
  }
  return 1.0 - (inter + 1.0) / (sp + sg - inter + 1.0);
}

std::vector<double> random_mask(std::size_t n, Rng& rng) {
  std::bernoulli_distribution b(0.4);
  std::vector<double> t(n);
  for (auto& v : t) v = b(rng) ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST(Bce, ZeroLogitsGiveLogTwo) {
  const Tensor z = Tensor::zeros({1, 4, 4});
  const std::vector<double> t{1, 0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0, 1};
  EXPECT_NEAR(bce_loss(z, t).item(), std::log(2.0), 1e-15);
}

TEST(Bce, SaturatedCorrectLogitsAreNearZeroAndFinite) {
  const std::vector<double> t{1, 0, 1, 0};
  const Tensor z = Tensor::from({1, 2, 2}, {40, -40, 800, -800});
  const double l = bce_loss(z, t).item();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(l, 1e-8);
  const Tensor wrong = Tensor::from({1, 2, 2}, {-800, 800, -800, 800});
  EXPECT_NEAR(bce_loss(wrong, t).item(), 800.0, 1e-9);
}

TEST(Bce, MatchesNaiveFormula) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = random_tensor({1, 6, 6}, rng, 3.0);
    const auto t = random_mask(36, rng);
    EXPECT_NEAR(bce_loss(z, t).item(), naive_bce(z, t), 1e-10);
  }
}

TEST(Iou, MatchesNaiveFormula) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = random_tensor({1, 6, 6}, rng, 3.0);
    const auto t = random_mask(36, rng);
    EXPECT_NEAR(iou_loss(z, t).item(), naive_iou(z, t), 1e-10);
    std::vector<double> p(36);
    for (int i = 0; i < 36; ++i) p[i] = sig(z.values()[i]);
    EXPECT_NEAR(iou_loss_probabilities(p, t), naive_iou(z, t), 1e-12);
  }
}

TEST(Iou, PerfectAndDisjointPredictions) {
  const std::vector<double> t{1, 1, 0, 0};
  EXPECT_NEAR(iou_loss_probabilities(std::vector<double>{1, 1, 0, 0}, t), 0.0, 1e-15);
  // inter 0, union 4: 1 - 1/5.
  EXPECT_NEAR(iou_loss_probabilities(std::vector<double>{0, 0, 1, 1}, t), 0.8, 1e-15);
  EXPECT_THROW(iou_loss_probabilities(std::vector<double>{0, 0, 1, 1}, std::vector<double>{0.5, 1, 0, 0}),
               ContractViolation);
}

TEST(Iou, DecreasesAsPredictionApproachesTarget) {
  Rng rng(3);
  const auto t = random_mask(25, rng);
  std::vector<double> start(25);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : start) v = u(rng);
  double previous = 2.0;
  for (int k = 0; k <= 10; ++k) {
    const double a = k / 10.0;
    std::vector<double> p(25);
    for (int i = 0; i < 25; ++i) p[i] = (1 - a) * start[i] + a * t[i];
    const double l = iou_loss_probabilities(p, t);
    EXPECT_LT(l, previous);
    previous = l;
  }
}

TEST(WeightedTotal, DefaultWeightsOnUnitLosses) {
  EXPECT_DOUBLE_EQ(weighted_total({1.0, 1.0, 1.0}), 1.75);
  EXPECT_DOUBLE_EQ(weighted_total({2.0, 0.0, 0.0}), 2.0);
  EXPECT_DOUBLE_EQ(weighted_total({0.0, 0.0, 4.0}), 1.0);
  EXPECT_THROW(weighted_total({1, 1, 1}, LossWeights{{1.0, -0.5, 0.25}}), ConfigError);
}

TEST(TotalLoss, ComposesPerOutputTerms) {
  Rng rng(4);
  decoder::PredictionBundle bundle;
  for (auto& l : bundle.logits) l = random_tensor({1, 8, 8}, rng, 2.0);
  const auto t = random_mask(64, rng);
  const LossWeights w{{1.0, 0.3, 0.7}};
  const auto out = total_loss(bundle, t, w);
  double expect = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double per = naive_bce(bundle.logits[k], t) + naive_iou(bundle.logits[k], t);
    EXPECT_NEAR(out.per_output[k], per, 1e-10);
    expect += w.lambda[k] * per;
  }
  EXPECT_NEAR(out.total.item(), expect, 1e-10);
  EXPECT_NEAR(weighted_total(out.per_output, w), out.total.item(), 1e-12);
}

TEST(TotalLoss, SizeMismatchIsContractViolation) {
  decoder::PredictionBundle bundle;
  for (auto& l : bundle.logits) l = Tensor::zeros({1, 4, 4});
  EXPECT_THROW(total_loss(bundle, std::vector<double>(15, 0.0)), ContractViolation);
}

TEST(TotalLoss, GradientDescentOnLogitsReducesLoss) {
  Rng rng(5);
  decoder::PredictionBundle bundle;
  for (auto& l : bundle.logits) l = random_tensor({1, 8, 8}, rng, 1.0, true);
  const auto t = random_mask(64, rng);
  double previous = total_loss(bundle, t).total.item();
  for (int step = 0; step < 20; ++step) {
    for (auto& l : bundle.logits) l.zero_grad();
    backward(total_loss(bundle, t).total);
    for (auto& l : bundle.logits)
      for (std::size_t i = 0; i < l.numel(); ++i) l.mutable_values()[i] -= 5.0 * l.grad()[i];
    const double now = total_loss(bundle, t).total.item();
    EXPECT_LT(now, previous);
    previous = now;
  }
}
