#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "oracles/scalar_losses.hpp"
#include "rose/gradient_suite.hpp"
#include "rose/rng.hpp"
#include "rose/stereo_ops.hpp"

using rose::Rng;
using rose::ad::Tensor;
using namespace rose::stereo;

namespace {

Tensor rand_tensor(const rose::ad::Shape& s, Rng& rng, double lo = 0.0, double hi = 1.0) {
  return Tensor::from(s, rng.uniform_vector(rose::ad::shape_numel(s), lo, hi));
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

ConfidenceMask full_mask(const rose::ad::Shape& s) { return {Tensor::full(s, 1.0), 1.0}; }

}  // namespace

TEST(Warp, ZeroDisparityIsIdentity) {
  Rng rng(1);
  const Tensor r = rand_tensor({1, 3, 4, 6}, rng);
  auto out = warp_right_to_left(r, Tensor::zeros({1, 1, 4, 6}));
  EXPECT_EQ(vec(out.image), vec(r));
  for (double v : out.validity.data()) EXPECT_EQ(v, 1.0);
}

TEST(Warp, RowShiftWithClamp) {
  const Tensor r = Tensor::from({1, 1, 1, 5}, {0, 1, 2, 3, 4});
  auto out = warp_right_to_left(r, Tensor::full({1, 1, 1, 5}, 1.0));
  EXPECT_EQ(vec(out.image), (std::vector<double>{0, 0, 1, 2, 3}));
  EXPECT_EQ(vec(out.validity), (std::vector<double>{0, 1, 1, 1, 1}));
}

TEST(Warp, NegativeDisparityRejected) {
  EXPECT_THROW(warp_right_to_left(Tensor::zeros({1, 1, 2, 3}), Tensor::full({1, 1, 2, 3}, -0.5)),
               std::invalid_argument);
}

TEST(Ssim, SelfSimilarityIsOne) {
  Rng rng(2);
  const Tensor x = rand_tensor({2, 3, 5, 7}, rng);
  const Tensor s = ssim_map(x, x);
  for (double v : s.data()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Ssim, InvertedMapMatchesScalarReference) {
  Rng rng(0);
  const Tensor x = rand_tensor({1, 1, 8, 8}, rng);
  std::vector<double> inv(x.numel());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - x.data()[i];
  const Tensor y = Tensor::from(x.shape(), inv);
  const auto got = vec(ssim_map(x, y));
  const auto ref = oracle::ssim(vec(x), inv, {1, 1, 8, 8});
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-8);
}

TEST(Ssim, ConstantMapsClosedForm) {
  const auto s = ssim_map(Tensor::zeros({1, 1, 4, 4}), Tensor::full({1, 1, 4, 4}, 1.0));
  const double expect = kSsimC1 * kSsimC2 / ((1 + kSsimC1) * kSsimC2);
  for (double v : s.data()) EXPECT_NEAR(v, expect, 1e-15);
}

TEST(Ssim, Symmetric) {
  Rng rng(3);
  const Tensor a = rand_tensor({1, 2, 6, 6}, rng), b = rand_tensor({1, 2, 6, 6}, rng);
  const auto ab = vec(ssim_map(a, b)), ba = vec(ssim_map(b, a));
  for (std::size_t i = 0; i < ab.size(); ++i) EXPECT_NEAR(ab[i], ba[i], 1e-15);
}

TEST(Photometric, IdenticalImagesGiveZero) {
  Rng rng(4);
  const Tensor x = rand_tensor({1, 3, 6, 6}, rng);
  EXPECT_NEAR(photometric_loss(x, x, Tensor::full({1, 1, 6, 6}, 1.0), {}).item(), 0.0, 1e-15);
}

TEST(Photometric, L1OnlyPath) {
  LossWeights w;
  w.alpha = 0.0;
  const double v = photometric_loss(Tensor::zeros({1, 3, 4, 4}), Tensor::full({1, 3, 4, 4}, 0.5),
                                    Tensor::full({1, 1, 4, 4}, 1.0), w)
                       .item();
  EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Photometric, MatchesScalarOracle) {
  Rng rng(5);
  const Tensor l = rand_tensor({1, 1, 8, 8}, rng), r = rand_tensor({1, 1, 8, 8}, rng);
  std::vector<double> valid(64, 1.0);
  for (std::size_t i = 0; i < 64; i += 5) valid[i] = 0.0;
  const double got = photometric_loss(l, r, Tensor::from({1, 1, 8, 8}, valid), {}).item();
  EXPECT_NEAR(got, oracle::photometric(vec(l), vec(r), valid, {1, 1, 8, 8}, 0.85), 1e-10);
}

TEST(Photometric, EmptySupportErrors) {
  try {
    photometric_loss(Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1, 1, 3, 3}),
                     Tensor::zeros({1, 1, 3, 3}), {});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("empty photometric support"), std::string::npos);
  }
}

TEST(Photometric, ForbiddenGuardBlocksCall) {
  const Tensor x = Tensor::zeros({1, 1, 3, 3});
  {
    PhotometricLossForbidden guard;
    EXPECT_THROW(photometric_loss(x, x, Tensor::full({1, 1, 3, 3}, 1.0), {}), std::logic_error);
  }
  EXPECT_NO_THROW(photometric_loss(x, x, Tensor::full({1, 1, 3, 3}, 1.0), {}));
}

TEST(Photometric, GradientPointsAwayFromMinimum) {
  // At I_hat = I + t v the directional derivative along v is positive.
  Rng rng(6);
  const Tensor l = rand_tensor({1, 2, 6, 6}, rng, 0.2, 0.8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto dir = rng.uniform_vector(l.numel(), -1.0, 1.0);
    std::vector<double> rv(l.numel());
    for (std::size_t i = 0; i < rv.size(); ++i) rv[i] = l.data()[i] + 0.05 * dir[i];
    Tensor r = Tensor::from(l.shape(), rv);
    r.set_requires_grad(true);
    photometric_loss(l, r, Tensor::full({1, 1, 6, 6}, 1.0), {}).backward();
    double dd = 0;
    for (std::size_t i = 0; i < rv.size(); ++i) dd += r.grad()[i] * dir[i];
    EXPECT_GT(dd, 0.0);
  }
}

TEST(Smoothness, ConstantDisparityIsZero) {
  Rng rng(7);
  EXPECT_EQ(smoothness_loss(Tensor::full({1, 1, 5, 6}, 3.0), rand_tensor({1, 3, 5, 6}, rng)).item(),
            0.0);
}

TEST(Smoothness, RampOnFlatImage) {
  std::vector<double> ramp(5 * 6);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 6; ++x) ramp[y * 6 + x] = static_cast<double>(x);
  const Tensor d = Tensor::from({1, 1, 5, 6}, ramp);
  EXPECT_DOUBLE_EQ(smoothness_loss(d, Tensor::full({1, 3, 5, 6}, 0.4)).item(), 1.0);

  std::vector<double> steep(3 * 5 * 6);
  for (std::size_t i = 0; i < steep.size(); ++i) steep[i] = 20.0 * static_cast<double>(i % 6);
  EXPECT_LT(smoothness_loss(d, Tensor::from({1, 3, 5, 6}, steep)).item(), 1e-8);
}

TEST(Smoothness, MatchesScalarOracle) {
  Rng rng(8);
  const Tensor d = rand_tensor({1, 1, 8, 8}, rng, 0.0, 5.0), img = rand_tensor({1, 3, 8, 8}, rng);
  EXPECT_NEAR(smoothness_loss(d, img).item(), oracle::smoothness(vec(d), vec(img), {1, 3, 8, 8}),
              1e-10);
}

TEST(FeatureConsistency, ReferenceValues) {
  Rng rng(9);
  const Tensor f = rand_tensor({1, 4, 3, 3}, rng, 0.1, 1.0);
  const Tensor g = rand_tensor({1, 4, 3, 3}, rng, 0.1, 1.0);
  EXPECT_NEAR(feature_consistency_loss(f, g, f, g).item(), 0.0, 1e-12);
  EXPECT_NEAR(feature_consistency_loss(rose::ad::neg(f), rose::ad::neg(g), f, g).item(), 2.0, 1e-12);
  // Channel 0 vs channel 1 one-hot features are orthogonal.
  std::vector<double> a(2 * 9, 0.0), b(2 * 9, 0.0);
  for (std::size_t p = 0; p < 9; ++p) {
    a[p] = 1.0;
    b[9 + p] = 1.0;
  }
  const Tensor ta = Tensor::from({1, 2, 3, 3}, a), tb = Tensor::from({1, 2, 3, 3}, b);
  EXPECT_NEAR(feature_consistency_loss(ta, ta, tb, tb).item(), 1.0, 1e-12);
}

TEST(FeatureConsistency, MatchesScalarOracleAndStopsClearGradient) {
  Rng rng(10);
  const rose::ad::Shape s{1, 4, 8, 8};
  Tensor al = rand_tensor(s, rng, -1, 1), ar = rand_tensor(s, rng, -1, 1);
  Tensor cl = rand_tensor(s, rng, -1, 1), cr = rand_tensor(s, rng, -1, 1);
  cl.set_requires_grad(true);
  al.set_requires_grad(true);
  const Tensor loss = feature_consistency_loss(al, ar, cl, cr);
  EXPECT_NEAR(loss.item(), oracle::feature_consistency(vec(al), vec(ar), vec(cl), vec(cr), {1, 4, 8, 8}),
              1e-10);
  loss.backward();
  EXPECT_TRUE(al.has_grad());
  EXPECT_FALSE(cl.has_grad());
}

TEST(DisparityConsistency, ReferenceValues) {
  const rose::ad::Shape s{1, 1, 3, 4};
  const Tensor clr = Tensor::full(s, 2.0);
  const LossWeights w;
  EXPECT_EQ(disparity_consistency_loss(clr, {clr, clr}, full_mask(s), w).item(), 0.0);
  EXPECT_DOUBLE_EQ(disparity_consistency_loss(clr, {Tensor::full(s, 3.0)}, full_mask(s), w).item(), 1.0);
  EXPECT_NEAR(disparity_consistency_loss(clr, {Tensor::full(s, 1.0), Tensor::full(s, 3.0)},
                                         full_mask(s), w)
                  .item(),
              1.9, 1e-15);
  try {
    disparity_consistency_loss(clr, {clr}, {Tensor::zeros(s), 0.0}, w);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("empty consistency support"), std::string::npos);
  }
}

TEST(DisparityConsistency, ClearTargetGetsNoGradient) {
  const rose::ad::Shape s{1, 1, 2, 2};
  Tensor clr = Tensor::full(s, 2.0), adv = Tensor::full(s, 2.5);
  clr.set_requires_grad(true);
  adv.set_requires_grad(true);
  disparity_consistency_loss(clr, {adv}, full_mask(s), {}).backward();
  EXPECT_FALSE(clr.has_grad());
  EXPECT_TRUE(adv.has_grad());
}

TEST(KdLoss, ReferenceValues) {
  const rose::ad::Shape s{1, 1, 2, 4};
  const Tensor t = Tensor::full(s, 1.0);
  EXPECT_EQ(kd_loss({t, t, t}, t, full_mask(s), {}).item(), 0.0);
  const Tensor half = Tensor::from(s, {1, 0, 1, 0, 1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(kd_loss({Tensor::full(s, 3.0)}, t, {half, 0.5}, {}).item(), 2.0);
  EXPECT_THROW(kd_loss({t}, t, {Tensor::zeros(s), 0.0}, {}), std::runtime_error);
}

TEST(SequenceLosses, MatchScalarOracleAndAreHomogeneous) {
  Rng rng(11);
  const rose::ad::Shape s{1, 1, 8, 8};
  const Tensor target = rand_tensor(s, rng, 0, 8);
  DisparitySequence seq;
  std::vector<std::vector<double>> seq_v;
  for (int i = 0; i < 4; ++i) {
    seq.push_back(rand_tensor(s, rng, 0, 8));
    seq_v.push_back(vec(seq.back()));
  }
  std::vector<double> m(64);
  for (auto& v : m) v = rng.uniform() < 0.7 ? 1.0 : 0.0;
  const ConfidenceMask mask{Tensor::from(s, m), 0.0};
  const LossWeights w;
  const double ref = oracle::sequence_l1(vec(target), seq_v, m, 0.9);
  EXPECT_NEAR(kd_loss(seq, target, mask, w).item(), ref, 1e-10);
  EXPECT_NEAR(disparity_consistency_loss(target, seq, mask, w).item(), ref, 1e-10);

  // Scaling every difference by 3 scales the loss by 3.
  DisparitySequence scaled;
  for (const auto& d : seq) {
    std::vector<double> v(d.numel());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = target.data()[i] + 3.0 * (d.data()[i] - target.data()[i]);
    scaled.push_back(Tensor::from(s, v));
  }
  EXPECT_NEAR(kd_loss(scaled, target, mask, w).item(), 3.0 * ref, 1e-10);
  EXPECT_NEAR(disparity_consistency_loss(target, scaled, mask, w).item(), 3.0 * ref, 1e-10);
}

TEST(ConfidenceMask, ConstantAgreementAndThreshold) {
  const rose::ad::Shape s{1, 1, 2, 6};
  auto m = geometric_confidence_mask(Tensor::full(s, 2.0), Tensor::full(s, 2.0), 1.0);
  // x - 2 is in bounds for x >= 2: 4 of 6 columns.
  EXPECT_EQ(vec(m.values), (std::vector<double>{0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1}));
  EXPECT_NEAR(m.density, 8.0 / 12.0, 1e-15);

  auto off = geometric_confidence_mask(Tensor::full(s, 2.0), Tensor::full(s, 4.0), 1.0);
  EXPECT_EQ(off.density, 0.0);
  auto edge = geometric_confidence_mask(Tensor::full(s, 2.0), Tensor::full(s, 3.0), 1.0);
  EXPECT_NEAR(edge.density, 8.0 / 12.0, 1e-15);
  EXPECT_THROW(geometric_confidence_mask(Tensor::full(s, 2.0), Tensor::full(s, 2.0), 0.0),
               std::invalid_argument);
}

TEST(LossWeights, DefaultsAndValidation) {
  LossWeights w;
  EXPECT_EQ(w.alpha, 0.85);
  EXPECT_EQ(w.lambda1, 1.0);
  EXPECT_EQ(w.lambda2, 10.0);
  EXPECT_EQ(w.lambda3, 1.0);
  EXPECT_EQ(w.lambda4, 1.0);
  EXPECT_EQ(w.beta, 0.9);
  EXPECT_EQ(w.tau, 1.0);
  EXPECT_EQ(w.n_iters, 4u);
  EXPECT_NO_THROW(w.validate());
  w.beta = 0.0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(Metrics, Epe) {
  const std::vector<double> gt(4, 5.0);
  const std::vector<std::uint8_t> all(4, 1);
  EXPECT_EQ(metric_epe(gt, gt, all), 0.0);
  EXPECT_EQ(metric_epe(std::vector<double>(4, 7.0), gt, all), 2.0);
  EXPECT_EQ(metric_epe(std::vector<double>{6, 6, 8, 8}, gt, all), 2.0);
  EXPECT_THROW(metric_epe(gt, gt, std::vector<std::uint8_t>(4, 0)), std::invalid_argument);
}

TEST(Metrics, BadT) {
  std::vector<double> gt(100, 10.0), d = gt;
  const std::vector<std::uint8_t> all(100, 1);
  EXPECT_EQ(metric_bad(d, gt, all, 3.0), 0.0);
  d[17] = 15.0;
  EXPECT_DOUBLE_EQ(metric_bad(d, gt, all, 3.0), 1.0);
  d[17] = 13.0;
  EXPECT_EQ(metric_bad(d, gt, all, 3.0), 0.0);
}

TEST(Metrics, D1Rules) {
  const std::vector<std::uint8_t> one{1};
  EXPECT_EQ(metric_d1(std::vector<double>{7}, std::vector<double>{7}, one), 0.0);
  EXPECT_EQ(metric_d1(std::vector<double>{104}, std::vector<double>{100}, one, D1Rule::kOr), 100.0);
  EXPECT_EQ(metric_d1(std::vector<double>{104}, std::vector<double>{100}, one, D1Rule::kAnd), 0.0);
  EXPECT_EQ(metric_d1(std::vector<double>{12}, std::vector<double>{10}, one, D1Rule::kOr), 100.0);
  EXPECT_EQ(metric_d1(std::vector<double>{12}, std::vector<double>{10}, one, D1Rule::kAnd), 0.0);
  EXPECT_THROW(metric_d1(std::vector<double>{1}, std::vector<double>{0}, one), std::invalid_argument);
}

TEST(Metrics, MonotoneProperties) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gt = rng.uniform_vector(50, 0.5, 40.0);
    auto d = gt;
    for (auto& v : d) v += rng.normal() * 4.0;
    const std::vector<std::uint8_t> all(50, 1);
    double prev = 101.0;
    for (double t : {0.5, 1.0, 2.0, 3.0, 5.0}) {
      const double b = metric_bad(d, gt, all, t);
      EXPECT_LE(b, prev);
      prev = b;
    }
    EXPECT_GE(metric_d1(d, gt, all, D1Rule::kOr), metric_d1(d, gt, all, D1Rule::kAnd));
  }
}

TEST(GradientSuite, LossesPassFiniteDifferences) {
  for (const auto& r : rose::verify::run_cases(rose::verify::loss_cases(), 5)) {
    EXPECT_LT(r.worst, rose::verify::kGradTolerance) << r.name;
  }
}
