#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rose/rng.hpp"
#include "rose/stereo_ops.hpp"
#include "rose/weather_sim.hpp"

using namespace rose::sim;
using rose::ad::Tensor;

namespace {

SceneConfig small_cfg() {
  SceneConfig c;
  c.height = 32;
  c.width = 64;
  c.d_max = 12;
  c.n_layers = 3;
  return c;
}

Tensor as_tensor(const Image& img) {
  return Tensor::from({1, img.c, img.h, img.w}, img.data);
}

Tensor mask_tensor(const Mask& m, bool invert) {
  std::vector<double> v(m.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (m.data[i] != 0) != invert ? 1.0 : 0.0;
  return Tensor::from({1, 1, m.h, m.w}, v);
}

// Non-occluded pixels whose 3x3 neighbourhood is entirely non-occluded.
Tensor eroded_noc(const Mask& occ) {
  std::vector<double> v(occ.data.size(), 0.0);
  for (std::size_t y = 1; y + 1 < occ.h; ++y)
    for (std::size_t x = 1; x + 1 < occ.w; ++x) {
      bool ok = true;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (occ.data[(y + dy) * occ.w + x + dx]) ok = false;
      v[y * occ.w + x] = ok ? 1.0 : 0.0;
    }
  return Tensor::from({1, 1, occ.h, occ.w}, v);
}

DegradationSpec spec_of(Condition k) {
  DegradationSpec s;
  s.kind = k;
  s.seed = 77;
  return s;
}

}  // namespace

TEST(Scene, ZeroParallaxPlane) {
  SceneConfig c = small_cfg();
  c.n_layers = 1;
  c.background_disparity = 0.0;
  const auto s = generate_scene(3, c);
  EXPECT_EQ(s.left, s.right);
  EXPECT_EQ(s.occ_left.count(), 0u);
  EXPECT_EQ(s.occ_right.count(), 0u);
}

TEST(Scene, SinglePlaneWarpsExactly) {
  SceneConfig c = small_cfg();
  c.n_layers = 1;
  c.background_disparity = 4.0;
  const auto s = generate_scene(5, c);
  const auto warped = rose::stereo::warp_right_to_left(as_tensor(s.right), as_tensor(s.disp_left));
  for (std::size_t y = 0; y < c.height; ++y)
    for (std::size_t x = 0; x < c.width; ++x) {
      EXPECT_EQ(s.occ_left.data[y * c.width + x], x < 4 ? 1 : 0);
      if (x < 4) continue;
      for (std::size_t ch = 0; ch < c.channels; ++ch)
        ASSERT_EQ(warped.image.at({0, ch, y, x}), s.left.at(ch, y, x));
    }
}

TEST(Scene, OcclusionWidthEqualsDisparityJump) {
  SceneConfig c = small_cfg();
  for (double b : {1.0, 2.0, 3.0})
    for (double d : {6.0, 9.0, 11.0}) {
      Layer bg;
      bg.x0 = -1e9;
      bg.x1 = 1e9;
      bg.y1 = c.height;
      bg.disparity = b;
      bg.texture_seed = 1;
      Layer fg;
      fg.x0 = 30;
      fg.x1 = 50;
      fg.y0 = 8;
      fg.y1 = 20;
      fg.disparity = d;
      fg.texture_seed = 2;
      const auto s = render_layers(c, bg, {fg}, 0);
      for (std::size_t y = 8; y < 20; ++y) {
        std::size_t run = 0;
        for (std::size_t x = 12; x < 30; ++x) run += s.occ_left.data[y * c.width + x];
        EXPECT_EQ(static_cast<double>(run), d - b) << "b=" << b << " d=" << d;
      }
    }
}

TEST(Scene, InvariantsAndDeterminism) {
  SceneConfig c = small_cfg();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = generate_scene(seed, c);
    for (const auto* d : {&s.disp_left, &s.disp_right})
      for (double v : d->data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, c.d_max);
        EXPECT_EQ(v, std::round(v));
      }
    for (double v : s.left.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const auto again = generate_scene(seed, c);
    EXPECT_EQ(s.left, again.left);
    EXPECT_EQ(s.right, again.right);
    EXPECT_EQ(s.occ_left, again.occ_left);
  }
}

TEST(Scene, ConfigErrors) {
  SceneConfig c = small_cfg();
  c.d_max = 16;  // not < 64 / 4
  EXPECT_THROW(generate_scene(0, c), std::invalid_argument);
  c = small_cfg();
  c.n_layers = 0;
  EXPECT_THROW(generate_scene(0, c), std::invalid_argument);
  c = small_cfg();
  c.n_layers = 8;  // cannot fit 7 layers with gap 2 below d_max 12
  EXPECT_THROW(generate_scene(0, c), std::runtime_error);
}

TEST(Scene, GroundTruthReconstructionIsExact) {
  SceneConfig c = small_cfg();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = generate_scene(seed, c);
    const auto w = rose::stereo::warp_right_to_left(as_tensor(s.right), as_tensor(s.disp_left));
    const Tensor left = as_tensor(s.left);
    EXPECT_LT(rose::stereo::photometric_loss(left, w.image, eroded_noc(s.occ_left), {}).item(), 1e-12);
    rose::stereo::LossWeights l1_only;
    l1_only.alpha = 0.0;
    EXPECT_LT(rose::stereo::photometric_loss(left, w.image, mask_tensor(s.occ_left, true), l1_only)
                  .item(),
              1e-12);
  }
}

TEST(Scene, ConfidenceMaskMatchesOcclusionOracle) {
  SceneConfig c = small_cfg();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = generate_scene(seed, c);
    const auto m = rose::stereo::geometric_confidence_mask(as_tensor(s.disp_left),
                                                           as_tensor(s.disp_right), 1.0);
    const double noc = 1.0 - static_cast<double>(s.occ_left.count()) /
                                 static_cast<double>(s.occ_left.data.size());
    EXPECT_NEAR(m.density, noc, 0.01);
    for (std::size_t i = 0; i < s.occ_left.data.size(); ++i)
      EXPECT_EQ(m.values.data()[i], s.occ_left.data[i] ? 0.0 : 1.0);
  }
}

TEST(Fog, ZeroScatteringIsIdentity) {
  const auto s = generate_scene(1, small_cfg());
  auto spec = spec_of(Condition::fog);
  spec.scattering = 0.0;
  const auto f = apply_fog(s, spec);
  EXPECT_EQ(f.left, s.left);
  EXPECT_EQ(f.right, s.right);
  EXPECT_EQ(f.condition, Condition::fog);
}

TEST(Fog, DenseLimitApproachesAirlight) {
  const auto s = generate_scene(1, small_cfg());
  auto spec = spec_of(Condition::fog);
  spec.scattering = 50.0;
  spec.airlight = 0.7;
  for (double v : apply_fog(s, spec).left.data) EXPECT_NEAR(v, 0.7, 1e-9);
}

TEST(Fog, SpotPixelsMatchScalarOracle) {
  SceneConfig c = small_cfg();
  c.n_layers = 1;
  c.background_disparity = 4.0;
  const auto s = generate_scene(2, c);
  auto spec = spec_of(Condition::fog);
  spec.scattering = 0.05;
  spec.airlight = 0.8;
  spec.focal_baseline = 64;
  const auto f = apply_fog(s, spec);
  const double t = std::exp(-0.8);
  for (auto [ch, y, x] : {std::array<std::size_t, 3>{0, 0, 0}, {1, 7, 13}, {2, 31, 63}, {0, 16, 40}}) {
    EXPECT_NEAR(f.left.at(ch, y, x), s.left.at(ch, y, x) * t + 0.8 * (1 - t), 1e-12);
    EXPECT_NEAR(f.right.at(ch, y, x), s.right.at(ch, y, x) * t + 0.8 * (1 - t), 1e-12);
  }
}

TEST(Night, IdentityAndGainGamma) {
  const auto s = generate_scene(1, small_cfg());
  auto spec = spec_of(Condition::night);
  spec.gamma = 1;
  spec.gain = 1;
  spec.noise_sigma = 0;
  EXPECT_EQ(apply_night(s, spec).left, s.left);

  StereoSample white = s;
  std::fill(white.left.data.begin(), white.left.data.end(), 1.0);
  spec.gamma = 2;
  spec.gain = 0.5;
  for (double v : apply_night(white, spec).left.data) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Night, SeededNoiseMatchesOracle) {
  const auto s = generate_scene(4, small_cfg());
  auto spec = spec_of(Condition::night);
  spec.noise_sigma = 0.05;
  const auto n = apply_night(s, spec);
  for (int view = 0; view < 2; ++view) {
    rose::Rng rng(rose::mix_seed(spec.seed, 0x416E, static_cast<std::uint64_t>(view)));
    const Image& in = view == 0 ? s.left : s.right;
    const Image& out = view == 0 ? n.left : n.right;
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      const double e = std::clamp(spec.gain * std::pow(in.data[i], spec.gamma) + 0.05 * rng.normal(), 0.0, 1.0);
      ASSERT_NEAR(out.data[i], e, 1e-12);
    }
  }
}

TEST(Rain, NoStreaksNoBlurIsIdentity) {
  const auto s = generate_scene(1, small_cfg());
  auto spec = spec_of(Condition::rain);
  spec.streaks = 0;
  spec.blur_radius = 0;
  const auto r = apply_rain(s, spec);
  EXPECT_EQ(r.left, s.left);
  EXPECT_EQ(r.right, s.right);
}

TEST(Rain, BlurOfImpulseIsBoxAverage) {
  Image img(1, 7, 7);
  img.at(0, 3, 3) = 1.0;
  const Image b = box_blur(img, 1);
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 7; ++x) {
      const bool inside = y >= 2 && y <= 4 && x >= 2 && x <= 4;
      EXPECT_DOUBLE_EQ(b.at(0, y, x), inside ? 1.0 / 9.0 : 0.0);
    }
}

TEST(Rain, StreakMaskGolden) {
  const auto spec = spec_of(Condition::rain);
  const Mask l = rain_streak_mask(spec, 32, 64, 0), r = rain_streak_mask(spec, 32, 64, 1);
  EXPECT_GT(l.count(), 0u);
  EXPECT_NE(l, r);
  EXPECT_EQ(hash_mask(l), 10197064324993723526ULL);
  EXPECT_EQ(hash_mask(r), 16323162060596156565ULL);
}

TEST(Augment, NoPatchesIsIdentity) {
  const auto s = generate_scene(1, small_cfg());
  const auto a = asymmetric_augment(s, 9, {0, 0.2});
  EXPECT_EQ(a.sample.left, s.left);
  EXPECT_EQ(a.sample.right, s.right);
  EXPECT_TRUE(a.patches.empty());
}

TEST(Augment, FourByFourPatchTouchesSixteenPixelsOfOneView) {
  const auto s = generate_scene(1, small_cfg());
  Image img = s.right;
  paste_mean_patch(img, {1, 10, 5, 4, 4});
  std::size_t diff = 0;
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x) {
      bool any = false;
      for (std::size_t ch = 0; ch < img.c; ++ch) any |= img.at(ch, y, x) != s.right.at(ch, y, x);
      diff += any;
    }
  EXPECT_EQ(diff, 16u);
}

TEST(Augment, OnlyOneViewChangesAndGoldenIsStable) {
  const auto s = generate_scene(1, small_cfg());
  const auto a = asymmetric_augment(s, 9, {3, 0.25});
  ASSERT_FALSE(a.patches.empty());
  const int view = a.patches.front().view;
  for (const auto& p : a.patches) EXPECT_EQ(p.view, view);
  EXPECT_EQ(view == 0 ? a.sample.right : a.sample.left, view == 0 ? s.right : s.left);
  EXPECT_EQ(a.sample.disp_left, s.disp_left);
  EXPECT_EQ(hash_image(view == 0 ? a.sample.left : a.sample.right), 9215836547108806873ULL);
  EXPECT_THROW(asymmetric_augment(s, 9, {1, 0.4}), std::invalid_argument);
}

TEST(Degradations, PreserveGeometryBitwise) {
  const auto s = generate_scene(6, small_cfg());
  for (auto k : {Condition::fog, Condition::rain, Condition::night}) {
    const auto d = degrade(s, spec_of(k));
    EXPECT_EQ(d.disp_left, s.disp_left);
    EXPECT_EQ(d.disp_right, s.disp_right);
    EXPECT_EQ(d.occ_left, s.occ_left);
    EXPECT_EQ(d.occ_right, s.occ_right);
    EXPECT_EQ(d.condition, k);
    EXPECT_EQ(degrade(s, spec_of(k)).left, d.left);
  }
}

TEST(Degradations, SeverityIsMonotone) {
  const SceneConfig c = small_cfg();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = generate_scene(seed, c);
    const Tensor left = as_tensor(s.left);
    const Tensor noc = mask_tensor(s.occ_left, true);
    auto loss_of = [&](const StereoSample& d) {
      const auto w = rose::stereo::warp_right_to_left(as_tensor(d.right), as_tensor(s.disp_left));
      return rose::stereo::photometric_loss(left, w.image, noc, {}).item();
    };
    auto fog = spec_of(Condition::fog);
    double prev = -1.0;
    for (double beta : {0.0, 0.02, 0.05, 0.1, 0.2}) {
      fog.scattering = beta;
      const double l = loss_of(apply_fog(s, fog));
      EXPECT_GE(l, prev) << "fog beta " << beta;
      prev = l;
    }
    auto night = spec_of(Condition::night);
    prev = -1.0;
    for (double sigma : {0.0, 0.02, 0.05, 0.1, 0.2}) {
      night.noise_sigma = sigma;
      const double l = loss_of(apply_night(s, night));
      EXPECT_GE(l, prev) << "night sigma " << sigma;
      prev = l;
    }
  }
}

TEST(Io, RoundTrips) {
  const auto dir = std::filesystem::temp_directory_path() / "rose_io_test";
  std::filesystem::remove_all(dir);
  const auto s = generate_scene(8, small_cfg());
  const auto where = save_sample(dir, degrade(s, spec_of(Condition::fog)));
  EXPECT_EQ(where, dir / "fog" / "8");
  const auto back = load_sample(where);
  EXPECT_EQ(back.condition, Condition::fog);
  EXPECT_EQ(back.seed, 8u);
  EXPECT_EQ(back.disp_left, s.disp_left);
  EXPECT_EQ(back.disp_right, s.disp_right);
  EXPECT_EQ(back.occ_left, s.occ_left);
  EXPECT_EQ(back.occ_right, s.occ_right);
  for (std::size_t i = 0; i < s.left.data.size(); ++i)
    EXPECT_NEAR(back.left.data[i], degrade(s, spec_of(Condition::fog)).left.data[i], 0.5 / 255.0 + 1e-12);
  std::filesystem::remove_all(dir);
}

TEST(Io, PfmLayout) {
  const auto path = std::filesystem::temp_directory_path() / "rose_layout.pfm";
  Image d(1, 2, 1);
  d.at(0, 0, 0) = 1.0;  // top row
  d.at(0, 1, 0) = 2.0;
  write_pfm(path, d);
  std::ifstream f(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(f)), {});
  ASSERT_EQ(content.substr(0, 12), "Pf\n1 2\n-1.0\n");
  float first;
  std::memcpy(&first, content.data() + 12, 4);
  EXPECT_EQ(first, 2.0f);  // bottom row written first
  EXPECT_EQ(read_pfm(path), d);
  std::filesystem::remove(path);
}
