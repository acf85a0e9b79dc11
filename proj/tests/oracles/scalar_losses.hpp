#pragma once

// Straight-loop recomputations of the training losses. Nothing here touches
// the autodiff engine; images are flat N x C x H x W vectors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Dims {
  std::size_t n, c, h, w;
  std::size_t idx(std::size_t s, std::size_t ch, std::size_t y, std::size_t x) const {
    return ((s * c + ch) * h + y) * w + x;
  }
};

inline std::size_t reflect(long i, std::size_t n) {
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i >= static_cast<long>(n)) return 2 * n - 2 - static_cast<std::size_t>(i);
  return static_cast<std::size_t>(i);
}

// Channel-averaged SSIM per pixel, N x H x W.
inline std::vector<double> ssim(const std::vector<double>& a, const std::vector<double>& b,
                                Dims d, double c1 = 1e-4, double c2 = 9e-4) {
  std::vector<double> out(d.n * d.h * d.w, 0.0);
  for (std::size_t s = 0; s < d.n; ++s)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const std::size_t yy = reflect(static_cast<long>(y) + dy, d.h);
              const std::size_t xx = reflect(static_cast<long>(x) + dx, d.w);
              const double va = a[d.idx(s, ch, yy, xx)], vb = b[d.idx(s, ch, yy, xx)];
              ma += va;
              mb += vb;
              maa += va * va;
              mbb += vb * vb;
              mab += va * vb;
            }
          ma /= 9;
          mb /= 9;
          const double va = maa / 9 - ma * ma, vb = mbb / 9 - mb * mb, cab = mab / 9 - ma * mb;
          acc += ((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        out[(s * d.h + y) * d.w + x] = acc / static_cast<double>(d.c);
      }
  return out;
}

inline double photometric(const std::vector<double>& l, const std::vector<double>& r,
                          const std::vector<double>& valid, Dims d, double alpha) {
  const auto s = ssim(l, r, d);
  double total = 0, count = 0;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        const std::size_t p = (n * d.h + y) * d.w + x;
        if (valid[p] == 0.0) continue;
        double l1 = 0;
        for (std::size_t ch = 0; ch < d.c; ++ch)
          l1 += std::abs(l[d.idx(n, ch, y, x)] - r[d.idx(n, ch, y, x)]);
        l1 /= static_cast<double>(d.c);
        total += alpha * (1 - s[p]) / 2 + (1 - alpha) * l1;
        count += 1;
      }
  return total / count;
}

// disp is N x H x W, img is N x C x H x W.
inline double smoothness(const std::vector<double>& disp, const std::vector<double>& img, Dims d) {
  auto D = [&](std::size_t n, std::size_t y, std::size_t x) { return disp[(n * d.h + y) * d.w + x]; };
  auto grad_i = [&](std::size_t n, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1) {
    double g = 0;
    for (std::size_t ch = 0; ch < d.c; ++ch)
      g += std::abs(img[d.idx(n, ch, y1, x1)] - img[d.idx(n, ch, y0, x0)]);
    return g / static_cast<double>(d.c);
  };
  double sx = 0, sy = 0;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t x = 0; x < d.w; ++x) {
        if (x + 1 < d.w) sx += std::abs(D(n, y, x + 1) - D(n, y, x)) * std::exp(-grad_i(n, y, x, y, x + 1));
        if (y + 1 < d.h) sy += std::abs(D(n, y + 1, x) - D(n, y, x)) * std::exp(-grad_i(n, y, x, y + 1, x));
      }
  return sx / static_cast<double>(d.n * d.h * (d.w - 1)) +
         sy / static_cast<double>(d.n * (d.h - 1) * d.w);
}

inline double feature_consistency(const std::vector<double>& al, const std::vector<double>& ar,
                                  const std::vector<double>& cl, const std::vector<double>& cr,
                                  Dims d) {
  auto view = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t y = 0; y < d.h; ++y)
        for (std::size_t x = 0; x < d.w; ++x) {
          double dot = 0, na = 0, nb = 0;
          for (std::size_t ch = 0; ch < d.c; ++ch) {
            const double va = a[d.idx(n, ch, y, x)], vb = b[d.idx(n, ch, y, x)];
            dot += va * vb;
            na += va * va;
            nb += vb * vb;
          }
          acc += 1 - dot / std::sqrt(na * nb + 1e-16);
        }
    return acc / static_cast<double>(d.n * d.h * d.w);
  };
  return 0.5 * (view(al, cl) + view(ar, cr));
}

// sum_i beta^(K-i) * masked mean |target - seq[i]|.
inline double sequence_l1(const std::vector<double>& target,
                          const std::vector<std::vector<double>>& seq,
                          const std::vector<double>& mask, double beta) {
  const std::size_t k = seq.size();
  double total = 0;
  for (std::size_t i = 0; i < k; ++i) {
    double acc = 0, cnt = 0;
    for (std::size_t p = 0; p < target.size(); ++p) {
      if (mask[p] == 0.0) continue;
      acc += std::abs(target[p] - seq[i][p]);
      cnt += 1;
    }
    total += std::pow(beta, static_cast<double>(k - 1 - i)) * acc / cnt;
  }
  return total;
}

}  // namespace oracle
