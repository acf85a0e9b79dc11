#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "rose/rng.hpp"
#include "rose/weather_sim.hpp"

namespace rose::sim {

namespace {

void check_kind(const DegradationSpec& spec, Condition want, const char* op) {
  if (spec.kind != want)
    throw std::invalid_argument(std::string(op) + ": spec kind is " +
                                std::string(to_string(spec.kind)));
  spec.validate();
}

void fog_view(Image& img, const Image& disp, const DegradationSpec& spec) {
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x) {
      const double z = spec.focal_baseline / std::max(disp.at(0, y, x), kFogDisparityFloor);
      const double t = std::exp(-spec.scattering * z);
      for (std::size_t ch = 0; ch < img.c; ++ch) {
        double& v = img.at(ch, y, x);
        v = v * t + spec.airlight * (1.0 - t);
      }
    }
}

void night_view(Image& img, const DegradationSpec& spec, int view) {
  Rng rng(mix_seed(spec.seed, 0x416E, static_cast<std::uint64_t>(view)));
  for (double& v : img.data) {
    const double n = rng.normal();
    v = std::clamp(spec.gain * std::pow(v, spec.gamma) + spec.noise_sigma * n, 0.0, 1.0);
  }
}

void rain_view(Image& img, const DegradationSpec& spec, int view) {
  const Mask m = rain_streak_mask(spec, img.h, img.w, view);
  for (std::size_t ch = 0; ch < img.c; ++ch)
    for (std::size_t p = 0; p < img.h * img.w; ++p) {
      if (!m.data[p]) continue;
      double& v = img.data[ch * img.h * img.w + p];
      v = (1.0 - spec.streak_alpha) * v + spec.streak_alpha * spec.streak_brightness;
    }
  img = box_blur(img, spec.blur_radius);
}

}  // namespace

void DegradationSpec::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("DegradationSpec: " + m); };
  if (!(scattering >= 0.0)) bad("scattering must be >= 0");
  if (!(airlight >= 0.0 && airlight <= 1.0)) bad("airlight must lie in [0, 1]");
  if (!(focal_baseline > 0.0)) bad("focal_baseline must be > 0");
  if (!(gamma >= 1.0)) bad("gamma must be >= 1");
  if (!(gain > 0.0 && gain <= 1.0)) bad("gain must lie in (0, 1]");
  if (!(noise_sigma >= 0.0)) bad("noise_sigma must be >= 0");
  if (!(streak_length > 0.0)) bad("streak_length must be > 0");
  if (!(streak_brightness >= 0.0 && streak_brightness <= 1.0)) bad("streak_brightness must lie in [0, 1]");
  if (!(streak_alpha >= 0.0 && streak_alpha <= 1.0)) bad("streak_alpha must lie in [0, 1]");
}

StereoSample apply_fog(const StereoSample& s, const DegradationSpec& spec) {
  check_kind(spec, Condition::fog, "apply_fog");
  StereoSample out = s;
  fog_view(out.left, s.disp_left, spec);
  fog_view(out.right, s.disp_right, spec);
  out.condition = Condition::fog;
  return out;
}

StereoSample apply_night(const StereoSample& s, const DegradationSpec& spec) {
  check_kind(spec, Condition::night, "apply_night");
  StereoSample out = s;
  night_view(out.left, spec, 0);
  night_view(out.right, spec, 1);
  out.condition = Condition::night;
  return out;
}

StereoSample apply_rain(const StereoSample& s, const DegradationSpec& spec) {
  check_kind(spec, Condition::rain, "apply_rain");
  StereoSample out = s;
  rain_view(out.left, spec, 0);
  rain_view(out.right, spec, 1);
  out.condition = Condition::rain;
  return out;
}

StereoSample degrade(const StereoSample& s, const DegradationSpec& spec) {
  switch (spec.kind) {
    case Condition::clear: return s;
    case Condition::fog: return apply_fog(s, spec);
    case Condition::night: return apply_night(s, spec);
    case Condition::rain: return apply_rain(s, spec);
  }
  return s;
}

Mask rain_streak_mask(const DegradationSpec& spec, std::size_t h, std::size_t w, int view) {
  Mask m(h, w);
  Rng rng(mix_seed(spec.seed, 0x7A1, static_cast<std::uint64_t>(view)));
  for (std::size_t i = 0; i < spec.streaks; ++i) {
    const double len = spec.streak_length * rng.uniform(0.7, 1.0);
    const double x = rng.uniform(0.0, static_cast<double>(w));
    const double y = rng.uniform(-len, static_cast<double>(h));
    const double theta = (spec.streak_angle_deg + rng.uniform(-5.0, 5.0)) * std::numbers::pi / 180.0;
    const double sx = std::sin(theta), sy = std::cos(theta);
    for (double t = 0.0; t <= len; t += 0.5) {
      const long px = std::lround(x + t * sx), py = std::lround(y + t * sy);
      if (px < 0 || py < 0 || px >= static_cast<long>(w) || py >= static_cast<long>(h)) continue;
      m.data[static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px)] = 1;
    }
  }
  return m;
}

Image box_blur(const Image& img, std::size_t radius) {
  if (radius == 0) return img;
  Image out(img.c, img.h, img.w);
  const long r = static_cast<long>(radius);
  const double norm = 1.0 / static_cast<double>((2 * r + 1) * (2 * r + 1));
  auto clampi = [](long i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(n) - 1));
  };
  for (std::size_t ch = 0; ch < img.c; ++ch)
    for (std::size_t y = 0; y < img.h; ++y)
      for (std::size_t x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx)
            acc += img.at(ch, clampi(static_cast<long>(y) + dy, img.h),
                          clampi(static_cast<long>(x) + dx, img.w));
        out.at(ch, y, x) = acc * norm;
      }
  return out;
}

void paste_mean_patch(Image& img, const Patch& p) {
  if (p.x + p.w > img.w || p.y + p.h > img.h || p.w == 0 || p.h == 0)
    throw std::invalid_argument("paste_mean_patch: patch outside image");
  const double area = static_cast<double>(p.w * p.h);
  for (std::size_t ch = 0; ch < img.c; ++ch) {
    double mean = 0.0;
    for (std::size_t y = p.y; y < p.y + p.h; ++y)
      for (std::size_t x = p.x; x < p.x + p.w; ++x) mean += img.at(ch, y, x);
    mean /= area;
    for (std::size_t y = p.y; y < p.y + p.h; ++y)
      for (std::size_t x = p.x; x < p.x + p.w; ++x) img.at(ch, y, x) = mean;
  }
}

AugmentResult asymmetric_augment(const StereoSample& s, std::uint64_t seed,
                                 const AugmentConfig& cfg) {
  if (!(cfg.max_frac > 0.0 && cfg.max_frac <= 0.3))
    throw std::invalid_argument("asymmetric_augment: max_frac must lie in (0, 0.3]");
  AugmentResult res{s, {}};
  if (cfg.max_patches == 0) return res;
  Rng rng(mix_seed(seed, 0xA5A));
  const int view = static_cast<int>(rng.index(2));
  Image& img = view == 0 ? res.sample.left : res.sample.right;
  const std::size_t count = 1 + rng.index(cfg.max_patches);
  const auto side = [&](std::size_t full) {
    const auto hi = std::max<std::size_t>(2, static_cast<std::size_t>(cfg.max_frac * static_cast<double>(full)));
    return 2 + rng.index(hi - 1);
  };
  for (std::size_t i = 0; i < count; ++i) {
    Patch p;
    p.view = view;
    p.w = std::min(side(img.w), img.w);
    p.h = std::min(side(img.h), img.h);
    p.x = rng.index(img.w - p.w + 1);
    p.y = rng.index(img.h - p.h + 1);
    paste_mean_patch(img, p);
    res.patches.push_back(p);
  }
  return res;
}

}  // namespace rose::sim
