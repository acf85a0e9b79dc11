#include <algorithm>
#include <cmath>
#include <limits>

#include "internal.hpp"

namespace rose::ad {

using detail::make_result;
using detail::parent;
using detail::wants;

namespace {

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    detail::shape_fail(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result("sum", {}, {acc}, {x}, [](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    const double g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) detail::shape_fail("mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  const auto s = split_at("sum", x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  const auto xv = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.len; ++k) {
      const double* src = xv.data() + (o * s.len + k) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  return make_result("sum_axis", out_shape, std::move(out), {x}, [s](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t k = 0; k < s.len; ++k) {
        double* dst = gx.data() + (o * s.len + k) * s.inner;
        const double* g = self.grad.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i];
      }
    }
  });
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
  const auto len = x.dim(axis);
  if (len == 0) detail::shape_fail("mean", "empty axis");
  return scale(sum(x, axis, keepdim), 1.0 / static_cast<double>(len));
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    detail::shape_fail("reshape", "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", shape, std::move(out), {x}, [](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) detail::shape_fail("concat", "no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) detail::shape_fail("concat", "axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
    if (!ok) detail::shape_fail("concat", "shape mismatch " + shape_str(ref) + " vs " + shape_str(s));
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const auto split = split_at("concat", out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].data();
    const std::size_t block = lens[p] * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(src.data() + o * block, block, out.data() + (o * split.len + offset) * split.inner);
    }
    offset += lens[p];
  }
  return make_result("concat", out_shape, std::move(out), parts, [split, lens](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < lens.size(); ++p) {
      const std::size_t block = lens[p] * split.inner;
      if (wants(self, p)) {
        auto& gp = parent(self, p).grad_buffer();
        for (std::size_t o = 0; o < split.outer; ++o) {
          const double* g = self.grad.data() + (o * split.len + offset) * split.inner;
          double* dst = gp.data() + o * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
        }
      }
      offset += lens[p];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto s = split_at("slice", x.shape(), axis);
  if (start + length > s.len) {
    detail::shape_fail("slice", "range [" + std::to_string(start) + ", " +
                                    std::to_string(start + length) + ") exceeds " +
                                    shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const auto xv = x.data();
  const std::size_t block = length * s.inner;
  std::vector<double> out(s.outer * block);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + (o * s.len + start) * s.inner, block, out.data() + o * block);
  }
  return make_result("slice", out_shape, std::move(out), {x}, [s, start, block](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = gx.data() + (o * s.len + start) * s.inner;
      const double* g = self.grad.data() + o * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto s = split_at("softmax", x.shape(), axis);
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const double e = std::exp(xv[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] /= total;
    }
  }
  return make_result("softmax", x.shape(), std::move(out), {x}, [s](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.len; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t j = base + k * s.inner;
          gx[j] += y[j] * (g[j] - dot);
        }
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    detail::shape_fail("matmul", "inner dimensions differ " + shape_str(a.shape()) + " vs " +
                                     shape_str(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    const auto& av = parent(self, 0).value;
    const auto& bv = parent(self, 1).value;
    if (wants(self, 0)) {
      auto& ga = parent(self, 0).grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (wants(self, 1)) {
      auto& gb = parent(self, 1).grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Tensor hflip(const Tensor& x) {
  if (x.rank() == 0) detail::shape_fail("hflip", "scalar input");
  const std::size_t w = x.shape().back();
  const std::size_t rows = x.numel() / std::max<std::size_t>(w, 1);
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = xv[r * w + (w - 1 - c)];
  return make_result("hflip", x.shape(), std::move(out), {x}, [rows, w](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * w + (w - 1 - c)] += self.grad[r * w + c];
  });
}

}  // namespace rose::ad
