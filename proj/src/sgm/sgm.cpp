#include "rose/sgm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rose::sgm {

CostKind parse_cost_kind(const std::string& s) {
  if (s == "sad") return CostKind::sad;
  if (s == "census") return CostKind::census;
  throw std::invalid_argument("unknown cost kind '" + s + "' (expected sad or census)");
}

std::string to_string(CostKind k) { return k == CostKind::sad ? "sad" : "census"; }

std::vector<double> gray255(const sim::Image& img) {
  std::vector<double> g(img.h * img.w, 0.0);
  for (std::size_t c = 0; c < img.c; ++c)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += img.data[c * g.size() + i];
  const double s = 255.0 / static_cast<double>(img.c);
  for (auto& v : g) v *= s;
  return g;
}

namespace {

long clampi(long v, long hi) { return std::clamp<long>(v, 0, hi); }

struct Gray {
  std::vector<double> v;
  long h, w;
  double at(long y, long x) const { return v[clampi(y, h - 1) * w + clampi(x, w - 1)]; }
};

// 24-bit census signature of the 5x5 window around (y, x).
std::uint32_t census_bits(const Gray& g, long y, long x) {
  const double c = g.at(y, x);
  std::uint32_t bits = 0;
  for (long dy = -2; dy <= 2; ++dy)
    for (long dx = -2; dx <= 2; ++dx) {
      if (dy == 0 && dx == 0) continue;
      bits = (bits << 1) | (g.at(y + dy, x + dx) < c ? 1u : 0u);
    }
  return bits;
}

}  // namespace

CostVolume raw_cost(const sim::Image& left, const sim::Image& right, std::size_t d_max, CostKind kind) {
  if (left.c != right.c || left.h != right.h || left.w != right.w)
    throw std::invalid_argument("raw_cost: image shapes differ");
  if (d_max == 0 || d_max >= left.w)
    throw std::invalid_argument("raw_cost: need 0 < d_max < W, got d_max " + std::to_string(d_max));
  const long h = static_cast<long>(left.h), w = static_cast<long>(left.w);
  const Gray gl{gray255(left), h, w}, gr{gray255(right), h, w};
  CostVolume vol(d_max, left.h, left.w);

  if (kind == CostKind::sad) {
    for (std::size_t d = 0; d < d_max; ++d)
      for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
          double s = 0;
          for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
              // Window coordinates replicate first, then the shift does.
              const long yy = clampi(y + dy, h - 1), xx = clampi(x + dx, w - 1);
              s += std::abs(gl.at(yy, xx) - gr.at(yy, xx - static_cast<long>(d)));
            }
          vol.at(d, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = s / 9.0;
        }
    return vol;
  }

  std::vector<std::uint32_t> cl(left.h * left.w), cr(left.h * left.w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      cl[y * w + x] = census_bits(gl, y, x);
      cr[y * w + x] = census_bits(gr, y, x);
    }
  for (std::size_t d = 0; d < d_max; ++d)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const long xr = clampi(x - static_cast<long>(d), w - 1);
        const int ham = std::popcount(cl[y * w + x] ^ cr[y * w + xr]);
        vol.at(d, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = ham * (255.0 / 24.0);
      }
  return vol;
}

std::vector<Direction> path_directions(int paths) {
  if (paths != 4 && paths != 8) throw std::invalid_argument("paths must be 4 or 8");
  std::vector<Direction> dirs = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
  if (paths == 8) dirs.insert(dirs.end(), {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}});
  return dirs;
}

CostVolume aggregate_path(const CostVolume& cost, double p1, double p2, Direction r) {
  if (p1 < 0 || p2 < p1) throw std::invalid_argument("sgm: need 0 <= P1 <= P2");
  const long h = static_cast<long>(cost.h), w = static_cast<long>(cost.w);
  const std::size_t nd = cost.d;
  const long dy = r[0], dx = r[1];
  CostVolume out(cost.d, cost.h, cost.w);
  // Visit pixels so the predecessor p - r is always done first.
  const long y0 = dy >= 0 ? 0 : h - 1, ystep = dy >= 0 ? 1 : -1;
  const long x0 = dx >= 0 ? 0 : w - 1, xstep = dx >= 0 ? 1 : -1;
  std::vector<double> prev(nd);
  for (long yi = 0, y = y0; yi < h; ++yi, y += ystep)
    for (long xi = 0, x = x0; xi < w; ++xi, x += xstep) {
      const long py = y - dy, px = x - dx;
      const auto uy = static_cast<std::size_t>(y), ux = static_cast<std::size_t>(x);
      if (py < 0 || py >= h || px < 0 || px >= w) {
        for (std::size_t d = 0; d < nd; ++d) out.at(d, uy, ux) = cost.at(d, uy, ux);
        continue;
      }
      double mprev = std::numeric_limits<double>::infinity();
      for (std::size_t d = 0; d < nd; ++d) {
        prev[d] = out.at(d, static_cast<std::size_t>(py), static_cast<std::size_t>(px));
        mprev = std::min(mprev, prev[d]);
      }
      for (std::size_t d = 0; d < nd; ++d) {
        double best = std::min(prev[d], mprev + p2);
        if (d > 0) best = std::min(best, prev[d - 1] + p1);
        if (d + 1 < nd) best = std::min(best, prev[d + 1] + p1);
        // Grouped so zero penalties return the raw cost exactly.
        out.at(d, uy, ux) = cost.at(d, uy, ux) + (best - mprev);
      }
    }
  return out;
}

CostVolume aggregate(const CostVolume& cost, double p1, double p2, int paths) {
  CostVolume sum(cost.d, cost.h, cost.w);
  for (const auto& r : path_directions(paths)) {
    const CostVolume l = aggregate_path(cost, p1, p2, r);
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += l.data[i];
  }
  return sum;
}

sim::Image wta(const CostVolume& vol) {
  sim::Image out(1, vol.h, vol.w);
  for (std::size_t y = 0; y < vol.h; ++y)
    for (std::size_t x = 0; x < vol.w; ++x) {
      std::size_t best = 0;
      for (std::size_t d = 1; d < vol.d; ++d)
        if (vol.at(d, y, x) < vol.at(best, y, x)) best = d;
      out.at(0, y, x) = static_cast<double>(best);
    }
  return out;
}

void SgmConfig::validate() const {
  if (d_max == 0) throw std::invalid_argument("sgm: d_max must be >= 1");
  if (p1 < 0 || p2 < p1) throw std::invalid_argument("sgm: need 0 <= P1 <= P2");
  path_directions(paths);
}

sim::Image sgm_disparity(const sim::Image& left, const sim::Image& right, const SgmConfig& cfg) {
  cfg.validate();
  return wta(aggregate(raw_cost(left, right, cfg.d_max, cfg.kind), cfg.p1, cfg.p2, cfg.paths));
}

}  // namespace rose::sgm
