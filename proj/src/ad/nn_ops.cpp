#include <algorithm>
#include <cmath>

#include "internal.hpp"

namespace rose::ad {

using detail::make_result;
using detail::parent;
using detail::wants;

namespace {

struct ConvGeom {
  std::size_t n, ci, h, w, co, k, stride, pad, ho, wo;

  // Output column range [lo, hi) whose input column ox*stride + kx - pad is in bounds.
  void col_range(std::size_t kx, std::size_t& lo, std::size_t& hi) const {
    const long s = static_cast<long>(stride);
    const long p = static_cast<long>(pad);
    const long kk = static_cast<long>(kx);
    long first = p - kk <= 0 ? 0 : (p - kk + s - 1) / s;
    long last = (static_cast<long>(w) - 1 + p - kk);
    last = last < 0 ? -1 : last / s;
    last = std::min(last, static_cast<long>(wo) - 1);
    lo = static_cast<std::size_t>(std::max(first, 0L));
    hi = last < first ? lo : static_cast<std::size_t>(last + 1);
  }
  bool row(std::size_t oy, std::size_t ky, std::size_t& iy) const {
    const long v = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
    if (v < 0 || v >= static_cast<long>(h)) return false;
    iy = static_cast<std::size_t>(v);
    return true;
  }
};

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  detail::require_rank("conv2d", x, 4);
  detail::require_rank("conv2d", w, 4);
  if (stride == 0) detail::shape_fail("conv2d", "stride must be >= 1");
  ConvGeom g{};
  g.n = x.dim(0);
  g.ci = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.co = w.dim(0);
  g.k = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (w.dim(1) != g.ci || w.dim(3) != g.k) {
    detail::shape_fail("conv2d", "weight " + shape_str(w.shape()) + " incompatible with input " +
                                     shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.co)) {
    detail::shape_fail("conv2d", "bias " + shape_str(bias.shape()) + " must have " +
                                     std::to_string(g.co) + " entries");
  }
  if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k) {
    detail::shape_fail("conv2d", "kernel larger than padded input " + shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;

  const auto xv = x.data();
  const auto wv = w.data();
  const double* bv = bias.defined() ? bias.data().data() : nullptr;
  std::vector<double> out(g.n * g.co * g.ho * g.wo);
  const std::size_t plane_in = g.h * g.w;
  const std::size_t plane_out = g.ho * g.wo;

  detail::parallel_for(g.n * g.co, [&](std::size_t begin, std::size_t end) {
    for (std::size_t job = begin; job < end; ++job) {
      const std::size_t n = job / g.co;
      const std::size_t co = job % g.co;
      double* dst = out.data() + job * plane_out;
      std::fill_n(dst, plane_out, bv ? bv[co] : 0.0);
      for (std::size_t ci = 0; ci < g.ci; ++ci) {
        const double* src = xv.data() + (n * g.ci + ci) * plane_in;
        const double* wk = wv.data() + (co * g.ci + ci) * g.k * g.k;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const double wt = wk[ky * g.k + kx];
            std::size_t lo, hi;
            g.col_range(kx, lo, hi);
            const long shift = static_cast<long>(kx) - static_cast<long>(g.pad);
            for (std::size_t oy = 0; oy < g.ho; ++oy) {
              std::size_t iy;
              if (!g.row(oy, ky, iy)) continue;
              const double* srow = src + iy * g.w;
              double* drow = dst + oy * g.wo;
              for (std::size_t ox = lo; ox < hi; ++ox) {
                drow[ox] += wt * srow[static_cast<long>(ox * g.stride) + shift];
              }
            }
          }
        }
      }
    }
  });

  return make_result(
      "conv2d", {g.n, g.co, g.ho, g.wo}, std::move(out), {x, w, bias}, [g](Node& self) {
        const auto& gout = self.grad;
        const auto& xv = parent(self, 0).value;
        const auto& wv = parent(self, 1).value;
        const std::size_t plane_in = g.h * g.w;
        const std::size_t plane_out = g.ho * g.wo;
        if (wants(self, 2)) {
          auto& gb = parent(self, 2).grad_buffer();
          for (std::size_t n = 0; n < g.n; ++n)
            for (std::size_t co = 0; co < g.co; ++co) {
              const double* gp = gout.data() + (n * g.co + co) * plane_out;
              double acc = 0.0;
              for (std::size_t i = 0; i < plane_out; ++i) acc += gp[i];
              gb[co] += acc;
            }
        }
        if (wants(self, 1)) {
          auto& gw = parent(self, 1).grad_buffer();
          detail::parallel_for(g.co, [&](std::size_t begin, std::size_t end) {
            for (std::size_t co = begin; co < end; ++co)
              for (std::size_t ci = 0; ci < g.ci; ++ci)
                for (std::size_t ky = 0; ky < g.k; ++ky)
                  for (std::size_t kx = 0; kx < g.k; ++kx) {
                    std::size_t lo, hi;
                    g.col_range(kx, lo, hi);
                    const long shift = static_cast<long>(kx) - static_cast<long>(g.pad);
                    double acc = 0.0;
                    for (std::size_t n = 0; n < g.n; ++n) {
                      const double* src = xv.data() + (n * g.ci + ci) * plane_in;
                      const double* gp = gout.data() + (n * g.co + co) * plane_out;
                      for (std::size_t oy = 0; oy < g.ho; ++oy) {
                        std::size_t iy;
                        if (!g.row(oy, ky, iy)) continue;
                        const double* srow = src + iy * g.w;
                        const double* grow = gp + oy * g.wo;
                        for (std::size_t ox = lo; ox < hi; ++ox)
                          acc += grow[ox] * srow[static_cast<long>(ox * g.stride) + shift];
                      }
                    }
                    gw[((co * g.ci + ci) * g.k + ky) * g.k + kx] += acc;
                  }
          });
        }
        if (wants(self, 0)) {
          auto& gx = parent(self, 0).grad_buffer();
          detail::parallel_for(g.n * g.ci, [&](std::size_t begin, std::size_t end) {
            for (std::size_t job = begin; job < end; ++job) {
              const std::size_t n = job / g.ci;
              const std::size_t ci = job % g.ci;
              double* dst = gx.data() + job * plane_in;
              for (std::size_t co = 0; co < g.co; ++co) {
                const double* gp = gout.data() + (n * g.co + co) * plane_out;
                const double* wk = wv.data() + (co * g.ci + ci) * g.k * g.k;
                for (std::size_t ky = 0; ky < g.k; ++ky)
                  for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const double wt = wk[ky * g.k + kx];
                    std::size_t lo, hi;
                    g.col_range(kx, lo, hi);
                    const long shift = static_cast<long>(kx) - static_cast<long>(g.pad);
                    for (std::size_t oy = 0; oy < g.ho; ++oy) {
                      std::size_t iy;
                      if (!g.row(oy, ky, iy)) continue;
                      double* drow = dst + iy * g.w;
                      const double* grow = gp + oy * g.wo;
                      for (std::size_t ox = lo; ox < hi; ++ox)
                        drow[static_cast<long>(ox * g.stride) + shift] += wt * grow[ox];
                    }
                  }
              }
            }
          });
        }
      });
}

namespace {

// Source index pair and weight of output coordinate o for half-pixel bilinear
// upsampling of a length-n axis by an integer factor.
struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> upsample_taps(std::size_t n, std::size_t factor) {
  std::vector<Tap> taps(n * factor);
  for (std::size_t o = 0; o < n * factor; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t factor) {
  detail::require_rank("upsample_bilinear", x, 4);
  if (factor == 0) detail::shape_fail("upsample_bilinear", "factor must be >= 1");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  const auto ty = upsample_taps(h, factor);
  const auto tx = upsample_taps(w, factor);
  const auto xv = x.data();
  std::vector<double> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const auto& b = tx[ox];
        const double top = src[a.i0 * w + b.i0] * (1 - b.w1) + src[a.i0 * w + b.i1] * b.w1;
        const double bot = src[a.i1 * w + b.i0] * (1 - b.w1) + src[a.i1 * w + b.i1] * b.w1;
        dst[oy * wo + ox] = top * (1 - a.w1) + bot * a.w1;
      }
    }
  }
  return make_result("upsample_bilinear", {x.dim(0), x.dim(1), ho, wo}, std::move(out), {x},
                     [planes, h, w, ho, wo, ty, tx](Node& self) {
                       auto& gx = parent(self, 0).grad_buffer();
                       for (std::size_t p = 0; p < planes; ++p) {
                         double* dst = gx.data() + p * h * w;
                         const double* g = self.grad.data() + p * ho * wo;
                         for (std::size_t oy = 0; oy < ho; ++oy) {
                           const auto& a = ty[oy];
                           for (std::size_t ox = 0; ox < wo; ++ox) {
                             const auto& b = tx[ox];
                             const double v = g[oy * wo + ox];
                             dst[a.i0 * w + b.i0] += v * (1 - a.w1) * (1 - b.w1);
                             dst[a.i0 * w + b.i1] += v * (1 - a.w1) * b.w1;
                             dst[a.i1 * w + b.i0] += v * a.w1 * (1 - b.w1);
                             dst[a.i1 * w + b.i1] += v * a.w1 * b.w1;
                           }
                         }
                       }
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  detail::require_rank("global_avg_pool", x, 4);
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  if (area == 0) detail::shape_fail("global_avg_pool", "empty spatial extent");
  const auto xv = x.data();
  std::vector<double> out(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += xv[p * area + i];
    out[p] = acc / static_cast<double>(area);
  }
  return make_result("global_avg_pool", {x.dim(0), x.dim(1), 1, 1}, std::move(out), {x},
                     [planes, area](Node& self) {
                       auto& gx = parent(self, 0).grad_buffer();
                       for (std::size_t p = 0; p < planes; ++p) {
                         const double g = self.grad[p] / static_cast<double>(area);
                         for (std::size_t i = 0; i < area; ++i) gx[p * area + i] += g;
                       }
                     });
}

Tensor box_filter3(const Tensor& x) {
  detail::require_rank("box_filter3", x, 4);
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) detail::shape_fail("box_filter3", "needs H, W >= 2, got " + shape_str(x.shape()));
  auto reflect = [](long i, std::size_t n) -> std::size_t {
    if (i < 0) return static_cast<std::size_t>(-i);
    if (i >= static_cast<long>(n)) return 2 * n - 2 - static_cast<std::size_t>(i);
    return static_cast<std::size_t>(i);
  };
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx)
            acc += src[reflect(static_cast<long>(y) + dy, h) * w +
                       reflect(static_cast<long>(xx) + dx, w)];
        dst[y * w + xx] = acc / 9.0;
      }
  }
  return make_result("box_filter3", x.shape(), std::move(out), {x},
                     [planes, h, w, reflect](Node& self) {
                       auto& gx = parent(self, 0).grad_buffer();
                       for (std::size_t p = 0; p < planes; ++p) {
                         double* dst = gx.data() + p * h * w;
                         const double* g = self.grad.data() + p * h * w;
                         for (std::size_t y = 0; y < h; ++y)
                           for (std::size_t xx = 0; xx < w; ++xx) {
                             const double v = g[y * w + xx] / 9.0;
                             for (long dy = -1; dy <= 1; ++dy)
                               for (long dx = -1; dx <= 1; ++dx)
                                 dst[reflect(static_cast<long>(y) + dy, h) * w +
                                     reflect(static_cast<long>(xx) + dx, w)] += v;
                           }
                       }
                     });
}

namespace {

// Normalizes groups of elements to zero mean / unit variance, then applies a
// per-channel affine map. group_of(i) enumerates (group, channel) membership.
// Instance norm: one group per (n, c). Batch norm: one group per c.
struct NormLayout {
  std::size_t n, c, area;
  bool per_instance;
  std::size_t groups() const { return per_instance ? n * c : c; }
  std::size_t group_size() const { return per_instance ? area : n * area; }
  // Calls fn(flat_index) for every element of group g.
  template <class F>
  void for_each(std::size_t g, F fn) const {
    if (per_instance) {
      for (std::size_t i = 0; i < area; ++i) fn(g * area + i);
    } else {
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < area; ++i) fn((s * c + g) * area + i);
    }
  }
  std::size_t channel(std::size_t g) const { return per_instance ? g % c : g; }
};

Tensor normalize(const char* op, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps, bool per_instance) {
  detail::require_rank(op, x, 4);
  detail::require_positive_eps(op, eps);
  const std::size_t c = x.dim(1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    detail::shape_fail(op, "affine parameters must have shape [" + std::to_string(c) + "], got " +
                               shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  NormLayout lay{x.dim(0), c, x.dim(2) * x.dim(3), per_instance};
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  const std::size_t groups = lay.groups();
  const double m = static_cast<double>(lay.group_size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(groups);
  std::vector<double> out(xv.size());
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    // Shifted accumulation keeps constant groups exactly at zero deviation.
    double pivot = 0.0;
    bool first = true;
    lay.for_each(gidx, [&](std::size_t i) {
      if (first) pivot = xv[i];
      first = false;
    });
    double shift = 0.0;
    lay.for_each(gidx, [&](std::size_t i) { shift += xv[i] - pivot; });
    const double mu = pivot + shift / m;
    double var = 0.0;
    lay.for_each(gidx, [&](std::size_t i) { var += (xv[i] - mu) * (xv[i] - mu); });
    var /= m;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[gidx] = is;
    const std::size_t ch = lay.channel(gidx);
    lay.for_each(gidx, [&](std::size_t i) {
      (*xhat)[i] = (xv[i] - mu) * is;
      out[i] = gv[ch] * (*xhat)[i] + bv[ch];
    });
  }
  return make_result(op, x.shape(), std::move(out), {x, gamma, beta},
                     [lay, xhat, inv_std, m](Node& self) {
                       const auto& g = self.grad;
                       const auto& gv = parent(self, 1).value;
                       if (wants(self, 1) || wants(self, 2)) {
                         std::vector<double> dg(lay.c, 0.0), db(lay.c, 0.0);
                         for (std::size_t gidx = 0; gidx < lay.groups(); ++gidx) {
                           const std::size_t ch = lay.channel(gidx);
                           lay.for_each(gidx, [&](std::size_t i) {
                             dg[ch] += g[i] * (*xhat)[i];
                             db[ch] += g[i];
                           });
                         }
                         if (wants(self, 1)) {
                           auto& gg = parent(self, 1).grad_buffer();
                           for (std::size_t ch = 0; ch < lay.c; ++ch) gg[ch] += dg[ch];
                         }
                         if (wants(self, 2)) {
                           auto& gb = parent(self, 2).grad_buffer();
                           for (std::size_t ch = 0; ch < lay.c; ++ch) gb[ch] += db[ch];
                         }
                       }
                       if (wants(self, 0)) {
                         auto& gx = parent(self, 0).grad_buffer();
                         for (std::size_t gidx = 0; gidx < lay.groups(); ++gidx) {
                           const double gam = gv[lay.channel(gidx)];
                           double sum_g = 0.0, sum_gx = 0.0;
                           lay.for_each(gidx, [&](std::size_t i) {
                             sum_g += g[i];
                             sum_gx += g[i] * (*xhat)[i];
                           });
                           const double is = (*inv_std)[gidx];
                           lay.for_each(gidx, [&](std::size_t i) {
                             gx[i] += gam * is * (g[i] - sum_g / m - (*xhat)[i] * sum_gx / m);
                           });
                         }
                       }
                     });
}

}  // namespace

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  return normalize("instance_norm", x, gamma, beta, eps, true);
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 4 && x.dim(0) < 2) {
    detail::shape_fail("batch_norm", "batch statistics need a batch of at least 2, got " +
                                         shape_str(x.shape()));
  }
  return normalize("batch_norm", x, gamma, beta, eps, false);
}

}  // namespace rose::ad
