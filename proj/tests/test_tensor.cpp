#include <gtest/gtest.h>

#include <cmath>

#include "rose/gradient_suite.hpp"
#include "rose/rng.hpp"
#include "rose/tensor.hpp"

using namespace rose;
using ad::Tensor;

TEST(Primitives, ReluForwardAndBackward) {
  Tensor x = Tensor::scalar(-2.0);
  x.set_requires_grad(true);
  Tensor y = ad::relu(x);
  EXPECT_EQ(y.item(), 0.0);
  y.backward();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Primitives, SubgradientAtZeroIsZero) {
  Tensor x = Tensor::from({2}, {0.0, 0.0});
  x.set_requires_grad(true);
  ad::sum(ad::add(ad::abs(x), ad::relu(x))).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Primitives, InstanceNormOfConstantChannelIsZero) {
  Tensor x = Tensor::full({1, 1, 4, 4}, 3.7);
  Tensor y = ad::instance_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), 1e-5);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Primitives, DftRoundTrip) {
  Rng rng(0);
  Tensor x = verify::random_tensor({1, 1, 8, 8}, rng);
  Tensor back = ad::idft2(ad::dft2(x));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(back.data()[i], x.data()[i], 1e-9);
}

TEST(Primitives, DftLinearity) {
  Rng rng(3);
  Tensor x = verify::random_tensor({2, 2, 6, 5}, rng);
  Tensor y = verify::random_tensor({2, 2, 6, 5}, rng);
  const double a = 0.7, b = -1.3;
  Tensor lhs = ad::dft2(ad::add(ad::scale(x, a), ad::scale(y, b)));
  Tensor rhs = ad::add(ad::scale(ad::dft2(x), a), ad::scale(ad::dft2(y), b));
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs.data()[i], rhs.data()[i], 1e-9);
}

TEST(Primitives, Parseval) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensor x = verify::random_tensor({1, 3, 8, 6}, rng);
    const double energy = ad::sum(ad::mul(x, x)).item();
    const double spectral = ad::sum(ad::pow(ad::complex_abs(ad::dft2(x)), 2.0)).item() / (8.0 * 6.0);
    EXPECT_NEAR(spectral, energy, 1e-6 * energy);
  }
}

TEST(Primitives, DftOfImpulseIsFlat) {
  Tensor x = Tensor::zeros({1, 1, 4, 4});
  x.mutable_data()[0] = 1.0;
  Tensor X = ad::dft2(x);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(X.data()[i], 1.0, 1e-12);
    EXPECT_NEAR(X.data()[16 + i], 0.0, 1e-12);
  }
}

TEST(Primitives, PolarRecombineKeepsSpectrumAtOwnMagnitude) {
  Rng rng(9);
  Tensor X = verify::random_tensor({1, 4, 3, 3}, rng);
  Tensor back = ad::polar_recombine(ad::complex_abs(X), X);
  for (std::size_t i = 0; i < X.numel(); ++i) EXPECT_NEAR(back.data()[i], X.data()[i], 1e-12);
}

TEST(Primitives, ShapeMismatchNamesPrimitiveAndShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    ad::add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ad::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x5]"), std::string::npos);
  }
  EXPECT_THROW(ad::matmul(a, a), ad::ShapeError);
  EXPECT_THROW(ad::conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), {}, 1, 1),
               ad::ShapeError);
}

TEST(Primitives, EpsilonMustBePositive) {
  Tensor x = Tensor::full({2}, 1.0);
  EXPECT_THROW(ad::log(x, 0.0), ad::ShapeError);
  EXPECT_THROW(ad::sqrt(x, -1.0), ad::ShapeError);
  EXPECT_THROW(ad::div(x, x, 0.0), ad::ShapeError);
  EXPECT_THROW(ad::instance_norm(Tensor::zeros({1, 1, 2, 2}), Tensor::full({1}, 1.0),
                                 Tensor::zeros({1}), 0.0),
               ad::ShapeError);
}

TEST(Primitives, GuardedPrimitivesStayFinite) {
  Tensor z = Tensor::from({3}, {0.0, -1.0, 1e-300});
  for (double v : ad::log(z).data()) EXPECT_TRUE(std::isfinite(v));
  for (double v : ad::sqrt(z).data()) EXPECT_TRUE(std::isfinite(v));
  for (double v : ad::div(Tensor::full({3}, 1.0), z).data()) EXPECT_TRUE(std::isfinite(v));
  Tensor zeros = Tensor::zeros({1, 2, 2, 2});
  for (double v : ad::polar_recombine(Tensor::full({1, 1, 2, 2}, 1.0), zeros).data())
    EXPECT_TRUE(std::isfinite(v));
}

TEST(Primitives, HorizontalSampleShiftsRow) {
  Tensor row = Tensor::from({1, 1, 1, 5}, {0, 1, 2, 3, 4});
  auto r = ad::sample_horizontal(row, Tensor::full({1, 1, 1, 5}, 1.0));
  const std::vector<double> expect{0, 0, 1, 2, 3};
  const std::vector<double> valid{0, 1, 1, 1, 1};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.values.data()[i], expect[i]);
    EXPECT_EQ(r.validity.data()[i], valid[i]);
  }
}

TEST(Primitives, UpsampleOfConstantIsConstant) {
  Tensor x = Tensor::full({1, 2, 3, 3}, 2.5);
  Tensor y = ad::upsample_bilinear(x, 4);
  EXPECT_EQ(y.shape(), (ad::Shape{1, 2, 12, 12}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(Primitives, ConvStrideTwoHalvesResolution) {
  Tensor y = ad::conv2d(Tensor::zeros({1, 3, 64, 128}), Tensor::zeros({8, 3, 3, 3}), {}, 2, 1);
  EXPECT_EQ(y.shape(), (ad::Shape{1, 8, 32, 64}));
}

TEST(Primitives, BatchNormNeedsTwoSamples) {
  EXPECT_THROW(ad::batch_norm(Tensor::zeros({1, 2, 3, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2})),
               ad::ShapeError);
}

TEST(Backward, SquareHasGradientSix) {
  Tensor x = Tensor::scalar(3.0);
  x.set_requires_grad(true);
  ad::mul(x, x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, SumOfRelu) {
  Tensor x = Tensor::from({2}, {-1.0, 2.0});
  x.set_requires_grad(true);
  ad::sum(ad::relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Backward, LossGradientIsOne) {
  Tensor x = Tensor::scalar(1.5);
  x.set_requires_grad(true);
  Tensor loss = ad::exp(x);
  loss.backward();
  EXPECT_DOUBLE_EQ(loss.grad()[0], 1.0);
}

TEST(Backward, NonScalarLossIsRejected) {
  Tensor x = Tensor::from({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  EXPECT_THROW(ad::relu(x).backward(), ad::ShapeError);
}

namespace {

Tensor two_layer_net(const Tensor& x, const Tensor& w1, const Tensor& w2) {
  return ad::mean(ad::pow(ad::conv2d(ad::tanh(ad::conv2d(x, w1, {}, 2, 1)), w2, {}, 1, 1), 2.0));
}

}  // namespace

TEST(Backward, RepeatedBackwardAccumulatesExactlyTwice) {
  Rng rng(4);
  Tensor x = verify::random_tensor({2, 2, 6, 6}, rng);
  Tensor w1 = verify::random_tensor({3, 2, 3, 3}, rng);
  Tensor w2 = verify::random_tensor({2, 3, 3, 3}, rng);
  w1.set_requires_grad(true);
  Tensor loss = two_layer_net(x, w1, w2);
  loss.backward();
  const std::vector<double> once(w1.grad().begin(), w1.grad().end());
  loss.backward();
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(w1.grad()[i], 2.0 * once[i]);
  w1.zero_grad();
  EXPECT_FALSE(w1.has_grad());
}

TEST(Backward, TwoLayerConvNetMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    Tensor x = verify::random_tensor({2, 2, 6, 6}, rng);
    Tensor w1 = verify::random_tensor({3, 2, 3, 3}, rng);
    Tensor w2 = verify::random_tensor({2, 3, 3, 3}, rng);
    EXPECT_LT(ad::check_gradient([&](const Tensor& w) { return two_layer_net(x, w, w2); }, w1), 1e-4);
    EXPECT_LT(ad::check_gradient([&](const Tensor& w) { return two_layer_net(x, w1, w); }, w2), 1e-4);
  }
}

TEST(Backward, NoGradGuardSkipsRecording) {
  Tensor x = Tensor::scalar(2.0);
  x.set_requires_grad(true);
  {
    ad::NoGradGuard guard;
    EXPECT_FALSE(ad::mul(x, x).requires_grad());
  }
  EXPECT_TRUE(ad::mul(x, x).requires_grad());
}

TEST(Backward, ResultsIndependentOfThreadCount) {
  Rng rng(11);
  Tensor x = verify::random_tensor({2, 3, 9, 10}, rng);
  Tensor w = verify::random_tensor({5, 3, 3, 3}, rng);
  auto run = [&](int threads) {
    ad::set_num_threads(threads);
    Tensor wp = w.detach();
    wp.set_requires_grad(true);
    Tensor y = ad::conv2d(x, wp, {}, 1, 1);
    ad::sum(ad::mul(y, y)).backward();
    std::vector<double> out(y.data().begin(), y.data().end());
    out.insert(out.end(), wp.grad().begin(), wp.grad().end());
    return out;
  };
  const auto single = run(1);
  const auto multi = run(4);
  ad::set_num_threads(1);
  EXPECT_EQ(single, multi);
}

TEST(CheckGradient, SumOfSquares) {
  Rng rng(0);
  Tensor x = verify::random_tensor({3, 3}, rng);
  EXPECT_LT(ad::check_gradient([](const Tensor& t) { return ad::sum(ad::mul(t, t)); }, x, 1e-5), 1e-6);
}

TEST(CheckGradient, AbsAwayFromZero) {
  Rng rng(1);
  Tensor x = verify::random_away_from_zero({4, 4}, rng, 0.1);
  EXPECT_LT(ad::check_gradient([](const Tensor& t) { return ad::sum(ad::abs(t)); }, x, 1e-5), 1e-5);
}

TEST(CheckGradient, HorizontalSamplingWrtDisparity) {
  Rng rng(2);
  Tensor img = verify::random_tensor({1, 3, 4, 10}, rng);
  Tensor disp = Tensor::full({1, 1, 4, 10}, 2.37);
  auto f = [&](const Tensor& d) { return ad::sum(ad::sample_horizontal(img, d).values); };
  EXPECT_LT(ad::check_gradient(f, disp, 1e-5), 1e-4);
}

TEST(CheckGradient, RejectsBadStepAndNonFinite) {
  Tensor x = Tensor::from({2}, {1.0, 2.0});
  auto f = [](const Tensor& t) { return ad::sum(t); };
  EXPECT_THROW(ad::check_gradient(f, x, 1e-2), std::invalid_argument);
  auto blowup = [](const Tensor& t) {
    return ad::sum(ad::div(Tensor::full({2}, 1.0), ad::add_scalar(t, -1.0 - 1e-5)));
  };
  Tensor at_pole = Tensor::from({2}, {5.0, 5.0});
  EXPECT_NO_THROW(ad::check_gradient(blowup, at_pole, 1e-5));
  auto nonfinite = [](const Tensor& t) { return ad::sum(ad::exp(ad::scale(t, 1e6))); };
  EXPECT_THROW(ad::check_gradient(nonfinite, x, 1e-5), std::domain_error);
}

// Every primitive in the catalog passes finite differences on 10 seeds.
TEST(CheckGradient, PrimitiveCatalog) {
  for (const auto& report : verify::run_cases(verify::primitive_cases(), 10)) {
    EXPECT_LT(report.worst, verify::kGradTolerance) << report.name;
  }
}
