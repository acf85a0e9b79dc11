#include <cmath>
#include <stdexcept>

#include "internal.hpp"

namespace rose::ad {

double check_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw std::invalid_argument("check_gradient: step must lie in [1e-7, 1e-3]");
  }
  Tensor probe = x.detach();
  probe.set_requires_grad(true);
  Tensor y = f(probe);
  if (y.numel() != 1) throw ShapeError("check_gradient: function must be scalar-valued");
  if (!std::isfinite(y.item())) throw std::domain_error("check_gradient: non-finite value at x");
  y.backward();
  std::vector<double> analytic(probe.numel(), 0.0);
  if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

  double worst = 0.0;
  const std::vector<double> base(x.data().begin(), x.data().end());
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto eval = [&](double offset) {
      std::vector<double> v = base;
      v[i] += offset;
      const double out = f(Tensor::from(x.shape(), std::move(v))).item();
      if (!std::isfinite(out)) {
        throw std::domain_error("check_gradient: non-finite value probing coordinate " +
                                std::to_string(i));
      }
      return out;
    };
    const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace rose::ad
