#include <algorithm>
#include <cmath>

#include "internal.hpp"

namespace rose::ad {

using detail::make_result;
using detail::parent;
using detail::wants;

namespace {

void require_disparity_map(const char* op, const Tensor& img, const Tensor& disp) {
  detail::require_rank(op, img, 4);
  detail::require_rank(op, disp, 4);
  if (disp.dim(0) != img.dim(0) || disp.dim(1) != 1 || disp.dim(2) != img.dim(2) ||
      disp.dim(3) != img.dim(3)) {
    detail::shape_fail(op, "disparity " + shape_str(disp.shape()) + " does not match " +
                               shape_str(img.shape()));
  }
}

}  // namespace

SampleResult sample_horizontal(const Tensor& img, const Tensor& disp) {
  require_disparity_map("sample_horizontal", img, disp);
  const std::size_t n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
  const std::size_t area = h * w;
  const auto iv = img.data();
  const auto dv = disp.data();

  struct Tap {
    std::size_t x0, x1;
    double a;
    bool valid;
  };
  auto taps = std::make_shared<std::vector<Tap>>(n * area);
  std::vector<double> valid(n * area);
  const double wmax = static_cast<double>(w - 1);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = s * area + y * w + x;
        const double xs = static_cast<double>(x) - dv[p];
        const bool ok = xs >= 0.0 && xs <= wmax;
        const double xc = std::clamp(xs, 0.0, wmax);
        const auto x0 = static_cast<std::size_t>(std::floor(xc));
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        (*taps)[p] = {x0, x1, xc - static_cast<double>(x0), ok};
        valid[p] = ok ? 1.0 : 0.0;
      }

  std::vector<double> out(iv.size());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* src = iv.data() + (s * c + ch) * area;
      double* dst = out.data() + (s * c + ch) * area;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const auto& t = (*taps)[s * area + y * w + x];
          dst[y * w + x] = (1.0 - t.a) * src[y * w + t.x0] + t.a * src[y * w + t.x1];
        }
    }

  Tensor values = make_result(
      "sample_horizontal", img.shape(), std::move(out), {img, disp},
      [n, c, h, w, area, taps](Node& self) {
        const auto& g = self.grad;
        const auto& iv = parent(self, 0).value;
        if (wants(self, 0)) {
          auto& gi = parent(self, 0).grad_buffer();
          for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = (s * c + ch) * area;
              for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                  const auto& t = (*taps)[s * area + y * w + x];
                  const double v = g[base + y * w + x];
                  gi[base + y * w + t.x0] += (1.0 - t.a) * v;
                  gi[base + y * w + t.x1] += t.a * v;
                }
            }
        }
        if (wants(self, 1)) {
          auto& gd = parent(self, 1).grad_buffer();
          for (std::size_t s = 0; s < n; ++s)
            for (std::size_t y = 0; y < h; ++y)
              for (std::size_t x = 0; x < w; ++x) {
                const std::size_t p = s * area + y * w + x;
                const auto& t = (*taps)[p];
                if (!t.valid || t.x0 == t.x1) continue;
                double acc = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                  const std::size_t base = (s * c + ch) * area + y * w;
                  acc += g[base + x] * (iv[base + t.x1] - iv[base + t.x0]);
                }
                gd[p] -= acc;
              }
        }
      });
  return {values, Tensor::from({n, 1, h, w}, std::move(valid))};
}

Tensor correlation_volume(const Tensor& fl, const Tensor& fr, std::size_t max_disp,
                          double sentinel) {
  detail::require_rank("correlation_volume", fl, 4);
  detail::require_same_shape("correlation_volume", fl, fr);
  const std::size_t n = fl.dim(0), c = fl.dim(1), h = fl.dim(2), w = fl.dim(3);
  if (max_disp == 0 || max_disp >= w) {
    detail::shape_fail("correlation_volume", "disparity range " + std::to_string(max_disp) +
                                                 " must be in [1, W) for W = " + std::to_string(w));
  }
  const std::size_t area = h * w;
  const double norm = 1.0 / std::sqrt(static_cast<double>(c));
  const auto lv = fl.data();
  const auto rv = fr.data();
  std::vector<double> out(n * max_disp * area);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t d = 0; d < max_disp; ++d) {
      double* dst = out.data() + (s * max_disp + d) * area;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < d; ++x) dst[y * w + x] = sentinel;
        for (std::size_t x = d; x < w; ++x) dst[y * w + x] = 0.0;
      }
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* l = lv.data() + (s * c + ch) * area;
        const double* r = rv.data() + (s * c + ch) * area;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = d; x < w; ++x) dst[y * w + x] += l[y * w + x] * r[y * w + x - d];
      }
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = d; x < w; ++x) dst[y * w + x] *= norm;
    }
  return make_result("correlation_volume", {n, max_disp, h, w}, std::move(out), {fl, fr},
                     [n, c, h, w, area, max_disp, norm](Node& self) {
                       const auto& g = self.grad;
                       const auto& lv = parent(self, 0).value;
                       const auto& rv = parent(self, 1).value;
                       const bool want_l = wants(self, 0), want_r = wants(self, 1);
                       auto* gl = want_l ? &parent(self, 0).grad_buffer() : nullptr;
                       auto* gr = want_r ? &parent(self, 1).grad_buffer() : nullptr;
                       for (std::size_t s = 0; s < n; ++s)
                         for (std::size_t d = 0; d < max_disp; ++d) {
                           const double* gp = g.data() + (s * max_disp + d) * area;
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             const std::size_t base = (s * c + ch) * area;
                             for (std::size_t y = 0; y < h; ++y)
                               for (std::size_t x = d; x < w; ++x) {
                                 const double v = gp[y * w + x] * norm;
                                 if (want_l) (*gl)[base + y * w + x] += v * rv[base + y * w + x - d];
                                 if (want_r) (*gr)[base + y * w + x - d] += v * lv[base + y * w + x];
                               }
                           }
                         }
                     });
}

Tensor lookup_disparity(const Tensor& vol, const Tensor& disp, std::size_t radius,
                        double sentinel) {
  detail::require_rank("lookup_disparity", vol, 4);
  detail::require_rank("lookup_disparity", disp, 4);
  const std::size_t n = vol.dim(0), dn = vol.dim(1), h = vol.dim(2), w = vol.dim(3);
  if (disp.shape() != Shape{n, 1, h, w}) {
    detail::shape_fail("lookup_disparity", "disparity " + shape_str(disp.shape()) +
                                               " does not match volume " + shape_str(vol.shape()));
  }
  const std::size_t taps = 2 * radius + 1;
  const std::size_t area = h * w;
  const auto vv = vol.data();
  const auto dv = disp.data();
  auto read = [dn, area, sentinel](const double* v, std::size_t s, long bin,
                                   std::size_t pix) -> double {
    if (bin < 0 || bin >= static_cast<long>(dn)) return 0.0;
    const double val = v[(s * dn + static_cast<std::size_t>(bin)) * area + pix];
    return val == sentinel ? 0.0 : val;
  };
  std::vector<double> out(n * taps * area);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t k = 0; k < taps; ++k)
      for (std::size_t pix = 0; pix < area; ++pix) {
        const double pos = dv[s * area + pix] + static_cast<double>(k) - static_cast<double>(radius);
        const double f = std::floor(pos);
        const double a = pos - f;
        const long b0 = static_cast<long>(f);
        out[(s * taps + k) * area + pix] =
            (1.0 - a) * read(vv.data(), s, b0, pix) + a * read(vv.data(), s, b0 + 1, pix);
      }
  return make_result(
      "lookup_disparity", {n, taps, h, w}, std::move(out), {vol, disp},
      [n, dn, area, taps, radius, sentinel, read](Node& self) {
        const auto& g = self.grad;
        const auto& vv = parent(self, 0).value;
        const auto& dv = parent(self, 1).value;
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t k = 0; k < taps; ++k)
            for (std::size_t pix = 0; pix < area; ++pix) {
              const double gv = g[(s * taps + k) * area + pix];
              const double pos =
                  dv[s * area + pix] + static_cast<double>(k) - static_cast<double>(radius);
              const double f = std::floor(pos);
              const double a = pos - f;
              const long b0 = static_cast<long>(f);
              if (wants(self, 0)) {
                auto& gvv = parent(self, 0).grad_buffer();
                for (long b : {b0, b0 + 1}) {
                  if (b < 0 || b >= static_cast<long>(dn)) continue;
                  const std::size_t idx = (s * dn + static_cast<std::size_t>(b)) * area + pix;
                  if (vv[idx] == sentinel) continue;
                  gvv[idx] += gv * (b == b0 ? 1.0 - a : a);
                }
              }
              if (wants(self, 1)) {
                parent(self, 1).grad_buffer()[s * area + pix] +=
                    gv * (read(vv.data(), s, b0 + 1, pix) - read(vv.data(), s, b0, pix));
              }
            }
      });
}

}  // namespace rose::ad
