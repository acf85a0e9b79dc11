#pragma once

// Warp, loss, mask and metric formulas for self-supervised stereo training.
//
// Image tensors are N x C x H x W with intensities in [0, 1]; disparity maps
// are N x 1 x H x W in pixels. A left pixel at column x matches the right
// pixel at column x - d.

#include <cstdint>
#include <span>
#include <vector>

#include "rose/tensor.hpp"

namespace rose::stereo {

using ad::Tensor;

/// Mixing, weighting and thresholding constants of the training objective.
struct LossWeights {
  double alpha = 0.85;   // SSIM share of the photometric term
  double lambda1 = 1.0;  // photometric
  double lambda2 = 10.0; // smoothness
  double lambda3 = 1.0;  // feature consistency
  double lambda4 = 1.0;  // disparity consistency
  double beta = 0.9;     // sequence decay
  double tau = 1.0;      // left-right check threshold, pixels
  std::size_t n_iters = 4;

  /// Throws std::invalid_argument when a field is outside its range.
  void validate() const;
};

/// Iterates D_1..D_K of the matcher, earliest first.
using DisparitySequence = std::vector<Tensor>;

/// Binary left-right consistency mask, N x 1 x H x W.
struct ConfidenceMask {
  Tensor values;
  double density = 0.0;
};

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct WarpResult {
  Tensor image;     // reconstructed left view
  Tensor validity;  // 1 where x - d lies inside the right image
};

/// Reconstructs the left view by sampling the right view at x - D_L.
WarpResult warp_right_to_left(const Tensor& right, const Tensor& disp_left);

/// Per-pixel SSIM over a 3x3 window (reflection padded), averaged over
/// channels. Returns N x 1 x H x W.
Tensor ssim_map(const Tensor& a, const Tensor& b, double c1 = kSsimC1, double c2 = kSsimC2);

/// Mean over valid pixels of alpha (1 - SSIM) / 2 + (1 - alpha) |I - I_hat|.
Tensor photometric_loss(const Tensor& left, const Tensor& reconstructed, const Tensor& validity,
                        const LossWeights& w);

/// Edge-aware first-order smoothness of disp guided by image.
Tensor smoothness_loss(const Tensor& disp, const Tensor& image);

/// 1 - per-pixel channel cosine between adverse and clear features, averaged
/// over pixels and both views. Clear features act as fixed targets.
Tensor feature_consistency_loss(const Tensor& adverse_left, const Tensor& adverse_right,
                                const Tensor& clear_left, const Tensor& clear_right);

/// sum_i beta^(K-i) * masked mean |D_clear - D_i|; D_clear is a fixed target.
Tensor disparity_consistency_loss(const Tensor& clear_disp, const DisparitySequence& adverse_seq,
                                  const ConfidenceMask& mask, const LossWeights& w);

/// Left-right consistency check; no gradients.
ConfidenceMask geometric_confidence_mask(const Tensor& disp_left, const Tensor& disp_right,
                                         double tau);

/// Sequence-weighted masked L1 between student iterates and teacher output.
Tensor kd_loss(const DisparitySequence& student_seq, const Tensor& teacher_disp,
               const ConfidenceMask& mask, const LossWeights& w);

/// While alive on a thread, photometric_loss throws std::logic_error. Used to
/// prove the distillation stage never reaches the photometric term.
class PhotometricLossForbidden {
 public:
  PhotometricLossForbidden();
  ~PhotometricLossForbidden();
  PhotometricLossForbidden(const PhotometricLossForbidden&) = delete;
  PhotometricLossForbidden& operator=(const PhotometricLossForbidden&) = delete;
};

// ---------------------------------------------------------------------------
// Evaluation metrics on flat disparity maps. eval_mask entries are 0 or 1.

enum class D1Rule { kOr, kAnd };

double metric_epe(std::span<const double> disp, std::span<const double> gt,
                  std::span<const std::uint8_t> eval_mask);
/// Percentage of masked pixels with |D - GT| > t (strict).
double metric_bad(std::span<const double> disp, std::span<const double> gt,
                  std::span<const std::uint8_t> eval_mask, double t);
/// Percentage of outliers: (|err| > 3) OR/AND (|err| > 0.05 GT).
double metric_d1(std::span<const double> disp, std::span<const double> gt,
                 std::span<const std::uint8_t> eval_mask, D1Rule rule = D1Rule::kOr);

}  // namespace rose::stereo
