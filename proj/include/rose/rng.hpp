#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace rose {

/// Identifier recorded in run manifests. The engine is the standard
/// 64-bit Mersenne Twister; uniform and normal variates are derived here so
/// streams do not depend on the standard library's distribution classes.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64+u53+box-muller";

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  /// Standard normal via Box-Muller (pairs cached).
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  std::vector<double> uniform_vector(std::size_t n, double lo, double hi);
  std::vector<double> normal_vector(std::size_t n, double sigma);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rose
