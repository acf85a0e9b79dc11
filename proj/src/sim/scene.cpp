#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rose/rng.hpp"
#include "rose/weather_sim.hpp"

namespace rose::sim {

namespace {

double lattice(std::uint64_t seed, std::size_t ch, long ix, long iy) {
  const std::uint64_t h = mix_seed(mix_seed(seed, ch), static_cast<std::uint64_t>(ix),
                                   static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, std::size_t ch, double u, double v, double cell) {
  const double fu = u / cell, fv = v / cell;
  const long iu = static_cast<long>(std::floor(fu)), iv = static_cast<long>(std::floor(fv));
  const double tu = smooth(fu - static_cast<double>(iu)), tv = smooth(fv - static_cast<double>(iv));
  const double a = lattice(seed, ch, iu, iv), b = lattice(seed, ch, iu + 1, iv);
  const double c = lattice(seed, ch, iu, iv + 1), d = lattice(seed, ch, iu + 1, iv + 1);
  return (a * (1 - tu) + b * tu) * (1 - tv) + (c * (1 - tu) + d * tu) * tv;
}

// Texture of a layer at surface coordinate (u, v) = left-view (x, y).
double texture(const Layer& l, std::size_t ch, double u, double v, double cell) {
  const double n = 0.4 * value_noise(l.texture_seed, ch, u, v, 2.0 * cell) +
                   0.4 * value_noise(l.texture_seed + 1, ch, u, v, cell) +
                   0.2 * value_noise(l.texture_seed + 2, ch, u, v, 0.5 * cell);
  return std::clamp(0.1 + 0.8 * (0.45 * l.base[ch % 3] + 0.55 * n), 0.0, 1.0);
}

bool covers(const Layer& l, double x, std::size_t y) {
  return y >= l.y0 && y < l.y1 && x >= l.x0 && x < l.x1;
}

struct Scene {
  const Layer& background;
  std::vector<const Layer*> front_to_back;

  // Index into front_to_back, or -1 for background.
  int front_left(double x, std::size_t y) const {
    for (std::size_t k = 0; k < front_to_back.size(); ++k)
      if (covers(*front_to_back[k], x, y)) return static_cast<int>(k);
    return -1;
  }
  int front_right(double xr, std::size_t y) const {
    for (std::size_t k = 0; k < front_to_back.size(); ++k)
      if (covers(*front_to_back[k], xr + front_to_back[k]->disparity, y)) return static_cast<int>(k);
    return -1;
  }
  const Layer& layer(int k) const { return k < 0 ? background : *front_to_back[k]; }
};

}  // namespace

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : data) n += v ? 1 : 0;
  return n;
}

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::clear: return "clear";
    case Condition::fog: return "fog";
    case Condition::rain: return "rain";
    case Condition::night: return "night";
  }
  return "?";
}

Condition parse_condition(std::string_view name) {
  for (auto c : {Condition::clear, Condition::fog, Condition::rain, Condition::night})
    if (to_string(c) == name) return c;
  throw std::invalid_argument("unknown condition '" + std::string(name) + "'");
}

void SceneConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("SceneConfig: " + m); };
  if (channels < 1 || channels > 3) bad("channels must be 1..3");
  if (height < 4 || width < 4) bad("image must be at least 4x4");
  if (!(d_max > 0.0) || !(d_max < static_cast<double>(width) / 4.0))
    bad("d_max must satisfy 0 < d_max < width / 4");
  if (n_layers < 1) bad("n_layers must be >= 1");
  if (!(texture_cell > 0.0)) bad("texture_cell must be > 0");
  if (background_disparity && !(*background_disparity >= 0.0 && *background_disparity < d_max))
    bad("background_disparity must lie in [0, d_max)");
}

StereoSample render_layers(const SceneConfig& cfg, const Layer& background,
                           const std::vector<Layer>& layers, std::uint64_t seed) {
  cfg.validate();
  Scene scene{background, {}};
  for (const auto& l : layers) scene.front_to_back.push_back(&l);
  std::stable_sort(scene.front_to_back.begin(), scene.front_to_back.end(),
                   [](const Layer* a, const Layer* b) { return a->disparity > b->disparity; });

  const std::size_t c = cfg.channels, h = cfg.height, w = cfg.width;
  StereoSample s;
  s.left = Image(c, h, w);
  s.right = Image(c, h, w);
  s.disp_left = Image(1, h, w);
  s.disp_right = Image(1, h, w);
  s.occ_left = Mask(h, w);
  s.occ_right = Mask(h, w);
  s.seed = seed;
  const double wmax = static_cast<double>(w - 1);

  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double xd = static_cast<double>(x);
      const double yd = static_cast<double>(y);

      const int kl = scene.front_left(xd, y);
      const Layer& ll = scene.layer(kl);
      s.disp_left.at(0, y, x) = ll.disparity;
      for (std::size_t ch = 0; ch < c; ++ch) s.left.at(ch, y, x) = texture(ll, ch, xd, yd, cfg.texture_cell);
      const double xr = xd - ll.disparity;
      s.occ_left.data[y * w + x] = (xr < 0.0 || scene.front_right(xr, y) != kl) ? 1 : 0;

      const int kr = scene.front_right(xd, y);
      const Layer& lr = scene.layer(kr);
      const double u = xd + lr.disparity;
      s.disp_right.at(0, y, x) = lr.disparity;
      for (std::size_t ch = 0; ch < c; ++ch) s.right.at(ch, y, x) = texture(lr, ch, u, yd, cfg.texture_cell);
      s.occ_right.data[y * w + x] = (u > wmax || scene.front_left(u, y) != kr) ? 1 : 0;
    }
  return s;
}

std::vector<Layer> draw_layers(std::uint64_t seed, const SceneConfig& cfg, Layer& background) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x5CE1E));
  const double w = static_cast<double>(cfg.width), h = static_cast<double>(cfg.height);
  auto colours = [&](Layer& l, std::uint64_t k) {
    l.texture_seed = mix_seed(seed, 1000 + k);
    for (auto& b : l.base) b = rng.uniform();
  };

  background = Layer{};
  background.x0 = -1e9;
  background.x1 = 1e9;
  background.y0 = 0;
  background.y1 = cfg.height;
  if (cfg.background_disparity) {
    background.disparity = *cfg.background_disparity;
  } else {
    const double hi = std::max(1.0, std::floor(cfg.d_max / 4.0));
    background.disparity = cfg.integer_disparity
                               ? 1.0 + static_cast<double>(rng.index(static_cast<std::uint64_t>(hi)))
                               : rng.uniform(1.0, hi + 1.0);
    background.disparity = std::min(background.disparity, std::ceil(cfg.d_max) - 1.0);
  }
  colours(background, 0);

  const std::size_t n_front = cfg.n_layers - 1;
  if (n_front == 0) return {};
  const double lo = background.disparity + 2.0;
  const double hi = cfg.integer_disparity ? std::ceil(cfg.d_max) - 1.0 : cfg.d_max - 1e-3;
  if (hi < lo) throw std::runtime_error("generate_scene: d_max leaves no room for foreground layers");

  std::vector<double> disp(n_front);
  bool ok = false;
  for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
    for (auto& d : disp) {
      d = cfg.integer_disparity
              ? lo + static_cast<double>(rng.index(static_cast<std::uint64_t>(hi - lo) + 1))
              : rng.uniform(lo, hi);
    }
    ok = true;
    for (std::size_t i = 0; i < n_front && ok; ++i)
      for (std::size_t j = i + 1; j < n_front && ok; ++j)
        if (std::abs(disp[i] - disp[j]) < 2.0) ok = false;
  }
  if (!ok)
    throw std::runtime_error("generate_scene: could not place " + std::to_string(n_front) +
                             " layers with disparity gaps >= 2 below d_max");

  std::vector<Layer> layers(n_front);
  for (std::size_t k = 0; k < n_front; ++k) {
    Layer& l = layers[k];
    const auto lw = static_cast<std::size_t>(rng.uniform(w / 6.0, w / 2.0));
    const auto lh = static_cast<std::size_t>(rng.uniform(h / 4.0, 0.7 * h));
    const auto x0 = rng.index(cfg.width - lw + 1);
    const auto y0 = rng.index(cfg.height - lh + 1);
    l.x0 = static_cast<double>(x0);
    l.x1 = static_cast<double>(x0 + lw);
    l.y0 = y0;
    l.y1 = y0 + lh;
    l.disparity = disp[k];
    colours(l, k + 1);
  }
  return layers;
}

StereoSample generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  Layer background;
  const auto layers = draw_layers(seed, cfg, background);
  return render_layers(cfg, background, layers, seed);
}

}  // namespace rose::sim
