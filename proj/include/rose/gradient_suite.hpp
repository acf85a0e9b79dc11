#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rose/rng.hpp"
#include "rose/tensor.hpp"

namespace rose::verify {

/// One named finite-difference check. run(seed) returns the worst relative
/// discrepancy over every differentiable input of the case.
struct GradCase {
  std::string group;
  std::string name;
  std::function<double(std::uint64_t seed)> run;
};

struct GradReport {
  std::string group;
  std::string name;
  double worst = 0.0;
  std::size_t seeds = 0;
};

inline constexpr double kGradTolerance = 1e-4;

std::vector<GradCase> primitive_cases();
std::vector<GradCase> loss_cases();
std::vector<GradCase> model_cases();
std::vector<GradCase> all_cases();

std::vector<GradReport> run_cases(const std::vector<GradCase>& cases, std::size_t seeds);

// Helpers shared with the tests.
ad::Tensor random_tensor(const ad::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);
/// Uniform values with |v| >= margin, for probing kinked primitives.
ad::Tensor random_away_from_zero(const ad::Shape& shape, Rng& rng, double margin = 0.05);
/// sum(t * r) with a fixed random r: turns any tensor function into a scalar.
ad::Tensor random_projection(const ad::Tensor& t, std::uint64_t seed);

}  // namespace rose::verify
