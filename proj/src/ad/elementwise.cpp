#include <cmath>

#include "internal.hpp"

namespace rose::ad {

using detail::make_result;
using detail::parent;
using detail::wants;

namespace {

// Flat source offsets of each output element for a broadcast binary op.
struct Broadcast {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia, ib;
};

Broadcast broadcast(const char* op, const Tensor& a, const Tensor& b) {
  Broadcast bc;
  if (a.shape() == b.shape()) {
    bc.out = a.shape();
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.rank(), b.rank());
  Shape sa(rank, 1), sb(rank, 1);
  std::copy(a.shape().begin(), a.shape().end(), sa.begin() + (rank - a.rank()));
  std::copy(b.shape().begin(), b.shape().end(), sb.begin() + (rank - b.rank()));
  bc.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (sa[i] != sb[i] && sa[i] != 1 && sb[i] != 1) {
      detail::shape_fail(op, "cannot broadcast " + shape_str(a.shape()) + " with " +
                                 shape_str(b.shape()));
    }
    bc.out[i] = std::max(sa[i], sb[i]);
  }
  std::vector<std::size_t> stride_a(rank, 0), stride_b(rank, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    stride_a[i] = sa[i] == 1 ? 0 : ra;
    stride_b[i] = sb[i] == 1 ? 0 : rb;
    ra *= sa[i];
    rb *= sb[i];
  }
  const std::size_t n = shape_numel(bc.out);
  bc.ia.resize(n);
  bc.ib.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bc.ia[i] = oa;
    bc.ib[i] = ob;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      oa += stride_a[ax];
      ob += stride_b[ax];
      if (idx[ax] < bc.out[ax]) break;
      oa -= stride_a[ax] * idx[ax];
      ob -= stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return bc;
}

// f(a, b) -> value; da(a, b, g) and db(a, b, g) -> partial contributions.
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  auto bc = std::make_shared<Broadcast>(broadcast(op, a, b));
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t n = shape_numel(bc->out);
  std::vector<double> out(n);
  if (bc->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[bc->ia[i]], bv[bc->ib[i]]);
  }
  return make_result(op, bc->out, std::move(out), {a, b}, [bc, da, db](Node& self) {
    const auto& g = self.grad;
    const auto& x = parent(self, 0).value;
    const auto& y = parent(self, 1).value;
    const std::size_t n = g.size();
    if (wants(self, 0)) {
      auto& ga = parent(self, 0).grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ix = bc->same ? i : bc->ia[i];
        const std::size_t iy = bc->same ? i : bc->ib[i];
        ga[ix] += da(x[ix], y[iy], g[i]);
      }
    }
    if (wants(self, 1)) {
      auto& gb = parent(self, 1).grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ix = bc->same ? i : bc->ia[i];
        const std::size_t iy = bc->same ? i : bc->ib[i];
        gb[iy] += db(x[ix], y[iy], g[i]);
      }
    }
  });
}

// f(x) -> y; df(x, y) -> dy/dx.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [df](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    const auto& xv = parent(self, 0).value;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(xv[i], self.value[i]);
  });
}

double guarded(double b, double eps) {
  if (std::abs(b) >= eps) return b;
  return b < 0.0 ? -eps : eps;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b, double eps) {
  detail::require_positive_eps("div", eps);
  return binary(
      "div", a, b, [eps](double x, double y) { return x / guarded(y, eps); },
      [eps](double, double y, double g) { return g / guarded(y, eps); },
      [eps](double x, double y, double g) {
        if (std::abs(y) < eps) return 0.0;
        return -g * x / (y * y);
      });
}

Tensor neg(const Tensor& x) {
  return unary("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double s) {
  return unary("scale", x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary("add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x, double eps) {
  detail::require_positive_eps("log", eps);
  return unary(
      "log", x, [eps](double v) { return std::log(std::max(v, eps)); },
      [eps](double v, double) { return v > eps ? 1.0 / v : 0.0; });
}

Tensor sqrt(const Tensor& x, double eps) {
  detail::require_positive_eps("sqrt", eps);
  return unary(
      "sqrt", x, [eps](double v) { return std::sqrt(std::max(v, 0.0) + eps); },
      [](double v, double y) { return v > 0.0 ? 0.5 / y : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Tensor pow(const Tensor& x, double exponent) {
  return unary(
      "pow", x, [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double v, double) {
        if (exponent == 0.0) return 0.0;
        if (v == 0.0 && exponent < 1.0) return 0.0;
        return exponent * std::pow(v, exponent - 1.0);
      });
}

}  // namespace rose::ad
