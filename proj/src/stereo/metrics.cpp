#include <cmath>
#include <stdexcept>
#include <string>

#include "rose/stereo_ops.hpp"

namespace rose::stereo {

namespace {

// Calls f(err, gt) on every masked pixel and returns the pixel count.
template <typename F>
std::size_t for_masked(const char* op, std::span<const double> disp, std::span<const double> gt,
                       std::span<const std::uint8_t> mask, F&& f) {
  if (disp.size() != gt.size() || disp.size() != mask.size())
    throw std::invalid_argument(std::string(op) + ": size mismatch (" +
                                std::to_string(disp.size()) + ", " + std::to_string(gt.size()) +
                                ", " + std::to_string(mask.size()) + ")");
  std::size_t n = 0;
  for (std::size_t i = 0; i < disp.size(); ++i) {
    if (!mask[i]) continue;
    f(std::abs(disp[i] - gt[i]), gt[i]);
    ++n;
  }
  if (n == 0) throw std::invalid_argument(std::string(op) + ": empty evaluation mask");
  return n;
}

}  // namespace

double metric_epe(std::span<const double> disp, std::span<const double> gt,
                  std::span<const std::uint8_t> eval_mask) {
  double acc = 0.0;
  const auto n = for_masked("metric_epe", disp, gt, eval_mask, [&](double e, double) { acc += e; });
  return acc / static_cast<double>(n);
}

double metric_bad(std::span<const double> disp, std::span<const double> gt,
                  std::span<const std::uint8_t> eval_mask, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("metric_bad: threshold must be > 0");
  std::size_t bad = 0;
  const auto n = for_masked("metric_bad", disp, gt, eval_mask, [&](double e, double) {
    if (e > t) ++bad;
  });
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

double metric_d1(std::span<const double> disp, std::span<const double> gt,
                 std::span<const std::uint8_t> eval_mask, D1Rule rule) {
  std::size_t bad = 0;
  const auto n = for_masked("metric_d1", disp, gt, eval_mask, [&](double e, double g) {
    if (!(g > 0.0)) throw std::invalid_argument("metric_d1: ground truth must be > 0 in the mask");
    const bool abs_out = e > 3.0;
    const bool rel_out = e > 0.05 * g;
    if (rule == D1Rule::kOr ? (abs_out || rel_out) : (abs_out && rel_out)) ++bad;
  });
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

}  // namespace rose::stereo
