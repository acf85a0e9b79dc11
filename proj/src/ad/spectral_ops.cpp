#include <cmath>
#include <numbers>

#include "internal.hpp"

namespace rose::ad {

using detail::make_result;
using detail::parent;
using detail::wants;

namespace {

struct Twiddles {
  std::vector<double> cos_, sin_;
  std::size_t n;
  explicit Twiddles(std::size_t len) : cos_(len), sin_(len), n(len) {
    for (std::size_t k = 0; k < len; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
      cos_[k] = std::cos(a);
      sin_[k] = std::sin(a);
    }
  }
};

// In-place unnormalized 2-D DFT of one H x W complex plane.
// sign = -1 for the forward transform, +1 for the inverse.
void dft_plane(double* re, double* im, std::size_t h, std::size_t w, const Twiddles& ty,
               const Twiddles& tx, int sign) {
  std::vector<double> tr(std::max(h, w)), ti(std::max(h, w));
  const double s = static_cast<double>(sign);
  for (std::size_t y = 0; y < h; ++y) {
    double* rr = re + y * w;
    double* ri = im + y * w;
    for (std::size_t k = 0; k < w; ++k) {
      double ar = 0.0, ai = 0.0;
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t t = (k * x) % w;
        const double c = tx.cos_[t], sn = s * tx.sin_[t];
        ar += rr[x] * c - ri[x] * sn;
        ai += rr[x] * sn + ri[x] * c;
      }
      tr[k] = ar;
      ti[k] = ai;
    }
    std::copy_n(tr.data(), w, rr);
    std::copy_n(ti.data(), w, ri);
  }
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t k = 0; k < h; ++k) {
      double ar = 0.0, ai = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t t = (k * y) % h;
        const double c = ty.cos_[t], sn = s * ty.sin_[t];
        ar += re[y * w + x] * c - im[y * w + x] * sn;
        ai += re[y * w + x] * sn + im[y * w + x] * c;
      }
      tr[k] = ar;
      ti[k] = ai;
    }
    for (std::size_t k = 0; k < h; ++k) {
      re[k * w + x] = tr[k];
      im[k * w + x] = ti[k];
    }
  }
}

void require_complex(const char* op, const Tensor& t) {
  detail::require_rank(op, t, 4);
  if (t.dim(1) % 2 != 0) {
    detail::shape_fail(op, "complex tensor needs an even channel count, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor dft2(const Tensor& x) {
  detail::require_rank("dft2", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t area = h * w;
  auto ty = std::make_shared<Twiddles>(h);
  auto tx = std::make_shared<Twiddles>(w);
  const auto xv = x.data();
  std::vector<double> out(n * 2 * c * area, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* re = out.data() + (s * 2 * c + ch) * area;
      double* im = out.data() + (s * 2 * c + c + ch) * area;
      std::copy_n(xv.data() + (s * c + ch) * area, area, re);
      dft_plane(re, im, h, w, *ty, *tx, -1);
    }
  return make_result("dft2", {n, 2 * c, h, w}, std::move(out), {x}, [=](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    std::vector<double> re(area), im(area);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::copy_n(self.grad.data() + (s * 2 * c + ch) * area, area, re.data());
        std::copy_n(self.grad.data() + (s * 2 * c + c + ch) * area, area, im.data());
        dft_plane(re.data(), im.data(), h, w, *ty, *tx, +1);
        double* dst = gx.data() + (s * c + ch) * area;
        for (std::size_t i = 0; i < area; ++i) dst[i] += re[i];
      }
  });
}

Tensor idft2(const Tensor& spectrum) {
  require_complex("idft2", spectrum);
  const std::size_t n = spectrum.dim(0), c = spectrum.dim(1) / 2;
  const std::size_t h = spectrum.dim(2), w = spectrum.dim(3);
  const std::size_t area = h * w;
  const double norm = 1.0 / static_cast<double>(area);
  auto ty = std::make_shared<Twiddles>(h);
  auto tx = std::make_shared<Twiddles>(w);
  const auto sv = spectrum.data();
  std::vector<double> out(n * c * area);
  std::vector<double> re(area), im(area);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::copy_n(sv.data() + (s * 2 * c + ch) * area, area, re.data());
      std::copy_n(sv.data() + (s * 2 * c + c + ch) * area, area, im.data());
      dft_plane(re.data(), im.data(), h, w, *ty, *tx, +1);
      double* dst = out.data() + (s * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) dst[i] = re[i] * norm;
    }
  return make_result("idft2", {n, c, h, w}, std::move(out), {spectrum}, [=](Node& self) {
    auto& gs = parent(self, 0).grad_buffer();
    std::vector<double> re(area), im(area);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::copy_n(self.grad.data() + (s * c + ch) * area, area, re.data());
        std::fill(im.begin(), im.end(), 0.0);
        dft_plane(re.data(), im.data(), h, w, *ty, *tx, -1);
        double* dre = gs.data() + (s * 2 * c + ch) * area;
        double* dim = gs.data() + (s * 2 * c + c + ch) * area;
        for (std::size_t i = 0; i < area; ++i) {
          dre[i] += re[i] * norm;
          dim[i] += im[i] * norm;
        }
      }
  });
}

Tensor complex_abs(const Tensor& spectrum) {
  require_complex("complex_abs", spectrum);
  const std::size_t n = spectrum.dim(0), c = spectrum.dim(1) / 2;
  const std::size_t area = spectrum.dim(2) * spectrum.dim(3);
  const auto sv = spectrum.data();
  std::vector<double> out(n * c * area);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < area; ++i) {
        const double re = sv[(s * 2 * c + ch) * area + i];
        const double im = sv[(s * 2 * c + c + ch) * area + i];
        out[(s * c + ch) * area + i] = std::hypot(re, im);
      }
  return make_result("complex_abs", {n, c, spectrum.dim(2), spectrum.dim(3)}, std::move(out),
                     {spectrum}, [n, c, area](Node& self) {
                       auto& gs = parent(self, 0).grad_buffer();
                       const auto& sv = parent(self, 0).value;
                       for (std::size_t s = 0; s < n; ++s)
                         for (std::size_t ch = 0; ch < c; ++ch)
                           for (std::size_t i = 0; i < area; ++i) {
                             const std::size_t o = (s * c + ch) * area + i;
                             const double mag = self.value[o];
                             if (mag == 0.0) continue;
                             const std::size_t ir = (s * 2 * c + ch) * area + i;
                             const std::size_t ii = (s * 2 * c + c + ch) * area + i;
                             gs[ir] += self.grad[o] * sv[ir] / mag;
                             gs[ii] += self.grad[o] * sv[ii] / mag;
                           }
                     });
}

Tensor polar_recombine(const Tensor& magnitude, const Tensor& spectrum, double eps) {
  require_complex("polar_recombine", spectrum);
  detail::require_positive_eps("polar_recombine", eps);
  const std::size_t n = spectrum.dim(0), c = spectrum.dim(1) / 2;
  const std::size_t area = spectrum.dim(2) * spectrum.dim(3);
  if (magnitude.shape() != Shape{n, c, spectrum.dim(2), spectrum.dim(3)}) {
    detail::shape_fail("polar_recombine", "magnitude " + shape_str(magnitude.shape()) +
                                              " does not match spectrum " +
                                              shape_str(spectrum.shape()));
  }
  const auto mv = magnitude.data();
  const auto sv = spectrum.data();
  std::vector<double> out(sv.size());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < area; ++i) {
        const std::size_t ir = (s * 2 * c + ch) * area + i;
        const std::size_t ii = (s * 2 * c + c + ch) * area + i;
        const double r = std::max(std::hypot(sv[ir], sv[ii]), eps);
        const double m = mv[(s * c + ch) * area + i];
        out[ir] = m * sv[ir] / r;
        out[ii] = m * sv[ii] / r;
      }
  return make_result(
      "polar_recombine", spectrum.shape(), std::move(out), {magnitude, spectrum},
      [n, c, area, eps](Node& self) {
        const auto& mv = parent(self, 0).value;
        const auto& sv = parent(self, 1).value;
        const auto& g = self.grad;
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < area; ++i) {
              const std::size_t im_idx = (s * c + ch) * area + i;
              const std::size_t ir = (s * 2 * c + ch) * area + i;
              const std::size_t ii = (s * 2 * c + c + ch) * area + i;
              const double raw = std::hypot(sv[ir], sv[ii]);
              const double r = std::max(raw, eps);
              const double ur = sv[ir] / r, ui = sv[ii] / r;
              if (wants(self, 0)) {
                parent(self, 0).grad_buffer()[im_idx] += g[ir] * ur + g[ii] * ui;
              }
              if (wants(self, 1)) {
                auto& gs = parent(self, 1).grad_buffer();
                const double m = mv[im_idx];
                if (raw > eps) {
                  const double dot = g[ir] * ur + g[ii] * ui;
                  gs[ir] += m / r * (g[ir] - ur * dot);
                  gs[ii] += m / r * (g[ii] - ui * dot);
                } else {
                  gs[ir] += m / eps * g[ir];
                  gs[ii] += m / eps * g[ii];
                }
              }
            }
      });
}

}  // namespace rose::ad
