#include "case_util.hpp"
#include "rose/gradient_suite.hpp"
#include "rose/stereo_ops.hpp"

namespace rose::verify {

using ad::Shape;
using ad::Tensor;

namespace {

// base + offsets with |offset| >= 0.05, so |a - b| never crosses its kink.
Tensor offset_from(const Tensor& base, Rng& rng) {
  return ad::add(base, random_away_from_zero(base.shape(), rng)).detach();
}

// Smooth ramp whose forward differences stay at least 0.1 away from zero.
Tensor graded_disparity(const Shape& shape, Rng& rng) {
  std::vector<double> v(ad::shape_numel(shape));
  const std::size_t h = shape[2], w = shape[3];
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double y = static_cast<double>((i / w) % h), x = static_cast<double>(i % w);
    v[i] = 1.0 + 0.3 * x + 0.7 * y + rng.uniform(-0.1, 0.1);
  }
  return Tensor::from(shape, std::move(v));
}

}  // namespace

std::vector<GradCase> loss_cases() {
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::function<double(std::uint64_t)> run) {
    cases.push_back({"loss", std::move(name), std::move(run)});
  };
  const stereo::LossWeights w;

  add_case("ssim_map", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({1, 2, 5, 6}, rng, 0, 1), b = random_tensor({1, 2, 5, 6}, rng, 0, 1);
    return check_inputs({a, b}, [](const auto& in) { return stereo::ssim_map(in[0], in[1]); }, seed);
  });

  add_case("photometric", [w](std::uint64_t seed) {
    Rng rng(seed);
    Tensor l = random_tensor({2, 3, 5, 6}, rng, 0.2, 0.8);
    Tensor r = offset_from(l, rng);
    std::vector<double> m(2 * 5 * 6);
    for (auto& v : m) v = rng.uniform() < 0.8 ? 1.0 : 0.0;
    m[0] = 1.0;
    const Tensor valid = Tensor::from({2, 1, 5, 6}, m);
    return check_inputs(
        {l, r}, [&](const auto& in) { return stereo::photometric_loss(in[0], in[1], valid, w); },
        seed);
  });

  add_case("photometric_through_warp", [w](std::uint64_t seed) {
    Rng rng(seed);
    Tensor l = random_tensor({1, 2, 4, 8}, rng, 0, 1), r = random_tensor({1, 2, 4, 8}, rng, 0, 1);
    Tensor disp = fractional_disparity({1, 1, 4, 8}, rng, 3.0);
    return check_inputs(
        {r, disp},
        [&](const auto& in) {
          auto warped = stereo::warp_right_to_left(in[0], in[1]);
          return stereo::photometric_loss(l, warped.image, warped.validity, w);
        },
        seed);
  });

  add_case("smoothness", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor d = graded_disparity({2, 1, 5, 6}, rng);
    Tensor img = random_tensor({2, 3, 5, 6}, rng, 0, 1);
    return check_inputs({d}, [&](const auto& in) { return stereo::smoothness_loss(in[0], img); },
                        seed);
  });

  add_case("feature_consistency", [](std::uint64_t seed) {
    Rng rng(seed);
    const Shape s{2, 4, 3, 5};
    Tensor al = random_tensor(s, rng), ar = random_tensor(s, rng);
    Tensor cl = random_tensor(s, rng), cr = random_tensor(s, rng);
    return check_inputs(
        {al, ar},
        [&](const auto& in) { return stereo::feature_consistency_loss(in[0], in[1], cl, cr); },
        seed);
  });

  auto sequence_case = [&](std::string name, bool kd) {
    add_case(std::move(name), [w, kd](std::uint64_t seed) {
      Rng rng(seed);
      const Shape s{2, 1, 4, 5};
      Tensor target = random_tensor(s, rng, 0, 6);
      std::vector<double> m(ad::shape_numel(s));
      for (auto& v : m) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
      m[0] = 1.0;
      const stereo::ConfidenceMask mask{Tensor::from(s, m), 0.0};
      std::vector<Tensor> seq;
      for (int i = 0; i < 3; ++i) seq.push_back(offset_from(target, rng));
      return check_inputs(seq, [&](const auto& in) {
        return kd ? stereo::kd_loss(in, target, mask, w)
                  : stereo::disparity_consistency_loss(target, in, mask, w);
      }, seed);
    });
  };
  sequence_case("disparity_consistency", false);
  sequence_case("kd", true);

  return cases;
}

}  // namespace rose::verify
