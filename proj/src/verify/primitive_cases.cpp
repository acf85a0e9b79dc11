#include <algorithm>
#include <cmath>

#include "case_util.hpp"
#include "rose/gradient_suite.hpp"

namespace rose::verify {

using ad::Shape;
using ad::Tensor;

ad::Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  return Tensor::from(shape, rng.uniform_vector(ad::shape_numel(shape), lo, hi));
}

ad::Tensor random_away_from_zero(const Shape& shape, Rng& rng, double margin) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) {
    const double mag = rng.uniform(margin, 1.0);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor::from(shape, std::move(v));
}

ad::Tensor random_projection(const Tensor& t, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xF00D));
  const Tensor r = Tensor::from(t.shape(), rng.uniform_vector(t.numel(), -1.0, 1.0));
  return ad::sum(ad::mul(t, r));
}

double check_inputs(const std::vector<Tensor>& inputs, const MultiFn& fn, std::uint64_t seed,
                    std::vector<std::size_t> which) {
  if (which.empty()) {
    for (std::size_t i = 0; i < inputs.size(); ++i) which.push_back(i);
  }
  double worst = 0.0;
  for (std::size_t i : which) {
    auto f = [&](const Tensor& x) {
      auto in = inputs;
      in[i] = x;
      return random_projection(fn(in), seed);
    };
    worst = std::max(worst, ad::check_gradient(f, inputs[i], 1e-5));
  }
  return worst;
}

Tensor fractional_disparity(const Shape& shape, Rng& rng, double max_int) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& d : v) {
    d = std::floor(rng.uniform(0.0, max_int)) + rng.uniform(0.1, 0.9);
  }
  return Tensor::from(shape, std::move(v));
}

namespace {

GradCase unary_case(std::string name, Tensor (*op)(const Tensor&), double lo, double hi,
                    bool kinked = false) {
  return {"primitive", std::move(name), [=](std::uint64_t seed) {
            Rng rng(seed);
            const Shape shape{2, 3, 4};
            Tensor x = kinked ? random_away_from_zero(shape, rng) : random_tensor(shape, rng, lo, hi);
            return check_inputs({x}, [op](const auto& in) { return op(in[0]); }, seed);
          }};
}

}  // namespace

std::vector<GradCase> primitive_cases() {
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::function<double(std::uint64_t)> run) {
    cases.push_back({"primitive", std::move(name), std::move(run)});
  };
  auto binary = [&](std::string name, Tensor (*op)(const Tensor&, const Tensor&),
                    bool broadcast_b) {
    add_case(name, [=](std::uint64_t seed) {
      Rng rng(seed);
      Tensor a = random_tensor({2, 3, 4}, rng);
      Tensor b = broadcast_b ? random_tensor({3, 1}, rng) : random_tensor({2, 3, 4}, rng);
      return check_inputs({a, b}, [op](const auto& in) { return op(in[0], in[1]); }, seed);
    });
  };
  binary("add", &ad::add, false);
  binary("add_broadcast", &ad::add, true);
  binary("sub", &ad::sub, false);
  binary("mul", &ad::mul, false);
  binary("mul_broadcast", &ad::mul, true);
  add_case("div", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({2, 3, 4}, rng);
    std::vector<double> bv(24);
    for (auto& v : bv) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.5);
    Tensor b = Tensor::from({2, 3, 4}, bv);
    return check_inputs({a, b}, [](const auto& in) { return ad::div(in[0], in[1]); }, seed);
  });
  cases.push_back(unary_case("neg", [](const Tensor& x) { return ad::neg(x); }, -1, 1));
  cases.push_back(unary_case("abs", [](const Tensor& x) { return ad::abs(x); }, -1, 1, true));
  cases.push_back(unary_case("exp", [](const Tensor& x) { return ad::exp(x); }, -1, 1));
  cases.push_back(unary_case("log", [](const Tensor& x) { return ad::log(x); }, 0.5, 2.0));
  cases.push_back(unary_case("sqrt", [](const Tensor& x) { return ad::sqrt(x); }, 0.5, 2.0));
  cases.push_back(unary_case("relu", [](const Tensor& x) { return ad::relu(x); }, -1, 1, true));
  cases.push_back(unary_case("sigmoid", [](const Tensor& x) { return ad::sigmoid(x); }, -3, 3));
  cases.push_back(unary_case("tanh", [](const Tensor& x) { return ad::tanh(x); }, -2, 2));
  cases.push_back(unary_case("softplus", [](const Tensor& x) { return ad::softplus(x); }, -3, 3));
  cases.push_back(unary_case("pow", [](const Tensor& x) { return ad::pow(x, 2.5); }, 0.5, 1.5));
  cases.push_back(unary_case("hflip", [](const Tensor& x) { return ad::hflip(x); }, -1, 1));
  cases.push_back(unary_case("sum", [](const Tensor& x) { return ad::sum(x); }, -1, 1));
  cases.push_back(unary_case("mean", [](const Tensor& x) { return ad::mean(x); }, -1, 1));
  cases.push_back(unary_case("sum_axis", [](const Tensor& x) { return ad::sum(x, 1); }, -1, 1));
  cases.push_back(
      unary_case("mean_axis", [](const Tensor& x) { return ad::mean(x, 2, false); }, -1, 1));
  cases.push_back(unary_case("softmax", [](const Tensor& x) { return ad::softmax(x, 1); }, -2, 2));
  cases.push_back(
      unary_case("reshape", [](const Tensor& x) { return ad::reshape(x, {6, 4}); }, -1, 1));
  cases.push_back(
      unary_case("slice", [](const Tensor& x) { return ad::slice(x, 2, 1, 2); }, -1, 1));

  add_case("concat", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({2, 2, 3, 3}, rng);
    Tensor b = random_tensor({2, 3, 3, 3}, rng);
    return check_inputs({a, b}, [](const auto& in) { return ad::concat({in[0], in[1]}, 1); }, seed);
  });
  add_case("matmul", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    return check_inputs({a, b}, [](const auto& in) { return ad::matmul(in[0], in[1]); }, seed);
  });
  for (std::size_t stride : {1u, 2u}) {
    add_case("conv2d_stride" + std::to_string(stride), [stride](std::uint64_t seed) {
      Rng rng(seed);
      Tensor x = random_tensor({2, 3, 6, 7}, rng);
      Tensor w = random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
      Tensor b = random_tensor({4}, rng);
      return check_inputs(
          {x, w, b}, [stride](const auto& in) { return ad::conv2d(in[0], in[1], in[2], stride, 1); },
          seed);
    });
  }
  add_case("conv2d_1x1", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 4, 5}, rng);
    Tensor w = random_tensor({2, 3, 1, 1}, rng);
    return check_inputs({x, w}, [](const auto& in) { return ad::conv2d(in[0], in[1], {}, 1, 0); },
                        seed);
  });
  add_case("upsample_bilinear", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 2, 3, 4}, rng);
    return check_inputs({x}, [](const auto& in) { return ad::upsample_bilinear(in[0], 2); }, seed);
  });
  add_case("global_avg_pool", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 3, 4}, rng);
    return check_inputs({x}, [](const auto& in) { return ad::global_avg_pool(in[0]); }, seed);
  });
  add_case("box_filter3", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({1, 2, 4, 5}, rng);
    return check_inputs({x}, [](const auto& in) { return ad::box_filter3(in[0]); }, seed);
  });
  add_case("instance_norm", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3, 3, 4}, rng);
    Tensor g = random_tensor({3}, rng, 0.5, 1.5);
    Tensor b = random_tensor({3}, rng);
    return check_inputs({x, g, b},
                        [](const auto& in) { return ad::instance_norm(in[0], in[1], in[2]); }, seed);
  });
  add_case("batch_norm", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({3, 2, 3, 3}, rng);
    Tensor g = random_tensor({2}, rng, 0.5, 1.5);
    Tensor b = random_tensor({2}, rng);
    return check_inputs({x, g, b},
                        [](const auto& in) { return ad::batch_norm(in[0], in[1], in[2]); }, seed);
  });
  add_case("sample_horizontal", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor img = random_tensor({2, 2, 3, 8}, rng);
    Tensor disp = fractional_disparity({2, 1, 3, 8}, rng, 3.0);
    return check_inputs(
        {img, disp}, [](const auto& in) { return ad::sample_horizontal(in[0], in[1]).values; }, seed);
  });
  add_case("dft2", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 2, 4, 5}, rng);
    return check_inputs({x}, [](const auto& in) { return ad::dft2(in[0]); }, seed);
  });
  add_case("idft2", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 4, 4, 5}, rng);
    return check_inputs({x}, [](const auto& in) { return ad::idft2(in[0]); }, seed);
  });
  add_case("complex_abs", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_away_from_zero({2, 4, 3, 3}, rng, 0.1);
    return check_inputs({x}, [](const auto& in) { return ad::complex_abs(in[0]); }, seed);
  });
  add_case("polar_recombine", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor m = random_tensor({2, 2, 3, 3}, rng, 0.1, 2.0);
    Tensor x = random_away_from_zero({2, 4, 3, 3}, rng, 0.1);
    return check_inputs({m, x},
                        [](const auto& in) { return ad::polar_recombine(in[0], in[1]); }, seed);
  });
  add_case("correlation_volume", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor l = random_tensor({2, 3, 3, 6}, rng);
    Tensor r = random_tensor({2, 3, 3, 6}, rng);
    return check_inputs(
        {l, r}, [](const auto& in) { return ad::correlation_volume(in[0], in[1], 4, -1e4); }, seed);
  });
  add_case("lookup_disparity", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor vol = random_tensor({2, 5, 3, 4}, rng);
    Tensor disp = fractional_disparity({2, 1, 3, 4}, rng, 4.0);
    return check_inputs(
        {vol, disp}, [](const auto& in) { return ad::lookup_disparity(in[0], in[1], 2, -1e4); },
        seed);
  });
  add_case("correlation_lookup_chain", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor l = random_tensor({1, 3, 3, 6}, rng);
    Tensor r = random_tensor({1, 3, 3, 6}, rng);
    Tensor disp = fractional_disparity({1, 1, 3, 6}, rng, 3.0);
    return check_inputs(
        {l, r},
        [disp](const auto& in) {
          return ad::lookup_disparity(ad::correlation_volume(in[0], in[1], 4, -1e4), disp, 1, -1e4);
        },
        seed);
  });
  return cases;
}

std::vector<GradCase> all_cases() {
  auto cases = primitive_cases();
  for (auto&& c : loss_cases()) cases.push_back(std::move(c));
  for (auto&& c : model_cases()) cases.push_back(std::move(c));
  return cases;
}

std::vector<GradReport> run_cases(const std::vector<GradCase>& cases, std::size_t seeds) {
  std::vector<GradReport> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    GradReport r{c.group, c.name, 0.0, seeds};
    for (std::size_t s = 0; s < seeds; ++s) {
      r.worst = std::max(r.worst, c.run(1000 + s));
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace rose::verify
