#pragma once

// Semi-global matching baseline. Costs are on an 8-bit scale (lower is
// better) so the classical P1/P2 defaults apply.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "rose/weather_sim.hpp"

namespace rose::sgm {

enum class CostKind { sad, census };

CostKind parse_cost_kind(const std::string& s);
std::string to_string(CostKind k);

/// D x H x W costs, index (d * h + y) * w + x.
struct CostVolume {
  std::size_t d = 0, h = 0, w = 0;
  std::vector<double> data;

  CostVolume() = default;
  CostVolume(std::size_t disparities, std::size_t height, std::size_t width, double fill = 0.0)
      : d(disparities), h(height), w(width), data(disparities * height * width, fill) {}
  double& at(std::size_t k, std::size_t y, std::size_t x) { return data[(k * h + y) * w + x]; }
  double at(std::size_t k, std::size_t y, std::size_t x) const { return data[(k * h + y) * w + x]; }
  bool operator==(const CostVolume&) const = default;
};

/// Luma in 0..255: channel mean of a [0, 1] image, scaled.
std::vector<double> gray255(const sim::Image& img);

/// d_max disparities 0..d_max-1. SAD is the 3x3 mean absolute difference;
/// census is the 5x5 Hamming distance scaled by 255/24. Pixels outside the
/// image (window or shift) replicate the border.
CostVolume raw_cost(const sim::Image& left, const sim::Image& right, std::size_t d_max, CostKind kind);

/// Scan direction (dy, dx); the predecessor of p is p - r.
using Direction = std::array<int, 2>;
std::vector<Direction> path_directions(int paths);

/// L_r for one direction.
CostVolume aggregate_path(const CostVolume& cost, double p1, double p2, Direction r);
/// Sum of L_r over 4 or 8 directions, added in path_directions order.
CostVolume aggregate(const CostVolume& cost, double p1, double p2, int paths);

/// Per-pixel argmin; ties go to the smaller disparity. Returns 1 x H x W.
sim::Image wta(const CostVolume& vol);

struct SgmConfig {
  std::size_t d_max = 16;
  CostKind kind = CostKind::census;
  double p1 = 8.0, p2 = 32.0;
  int paths = 8;
  void validate() const;
};

sim::Image sgm_disparity(const sim::Image& left, const sim::Image& right, const SgmConfig& cfg);

}  // namespace rose::sgm
