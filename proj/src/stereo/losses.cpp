#include <cmath>
#include <stdexcept>
#include <string>

#include "rose/stereo_ops.hpp"

namespace rose::stereo {

namespace {

thread_local int photometric_forbidden = 0;

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ad::ShapeError(std::string(op) + ": shape mismatch " + ad::shape_str(a.shape()) +
                         " vs " + ad::shape_str(b.shape()));
  }
}

void require_map(const char* op, const Tensor& t) {
  if (t.rank() != 4 || t.dim(1) != 1) {
    throw ad::ShapeError(std::string(op) + ": expected N x 1 x H x W map, got " +
                         ad::shape_str(t.shape()));
  }
}

void require_image_pair(const char* op, const Tensor& img, const Tensor& map) {
  if (img.rank() != 4 || map.rank() != 4 || img.dim(0) != map.dim(0) ||
      img.dim(2) != map.dim(2) || img.dim(3) != map.dim(3)) {
    throw ad::ShapeError(std::string(op) + ": image " + ad::shape_str(img.shape()) +
                         " and map " + ad::shape_str(map.shape()) + " disagree on N, H, W");
  }
}

double value_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

// Sum over i of beta^(K-i) * masked mean |target - seq_i|, target detached.
Tensor sequence_masked_l1(const char* op, const Tensor& target, const DisparitySequence& seq,
                          const ConfidenceMask& mask, double beta, const char* empty_msg) {
  if (seq.empty()) throw std::invalid_argument(std::string(op) + ": empty disparity sequence");
  require_map(op, target);
  require_same(op, target, mask.values);
  const double count = value_sum(mask.values);
  if (count <= 0.0) throw std::runtime_error(std::string(op) + ": " + empty_msg);

  const Tensor fixed = target.detach();
  const std::size_t k = seq.size();
  Tensor total;
  for (std::size_t i = 0; i < k; ++i) {
    require_same(op, target, seq[i]);
    const double weight = std::pow(beta, static_cast<double>(k - 1 - i));
    Tensor term = ad::scale(ad::sum(ad::mul(ad::abs(ad::sub(fixed, seq[i])), mask.values)),
                            weight / count);
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

}  // namespace

void LossWeights::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("LossWeights: " + what); };
  if (!(alpha >= 0.0 && alpha <= 1.0)) bad("alpha must lie in [0, 1]");
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0 && lambda4 >= 0.0))
    bad("lambda weights must be nonnegative");
  if (!(beta > 0.0 && beta <= 1.0)) bad("beta must lie in (0, 1]");
  if (!(tau > 0.0)) bad("tau must be positive");
  if (n_iters < 1) bad("n_iters must be at least 1");
}

PhotometricLossForbidden::PhotometricLossForbidden() { ++photometric_forbidden; }
PhotometricLossForbidden::~PhotometricLossForbidden() { --photometric_forbidden; }

WarpResult warp_right_to_left(const Tensor& right, const Tensor& disp_left) {
  require_map("warp_right_to_left", disp_left);
  require_image_pair("warp_right_to_left", right, disp_left);
  for (double d : disp_left.data()) {
    if (d < 0.0 || !std::isfinite(d))
      throw std::invalid_argument("warp_right_to_left: disparity must be finite and >= 0, got " +
                                  std::to_string(d));
  }
  auto s = ad::sample_horizontal(right, disp_left);
  return {s.values, s.validity};
}

Tensor ssim_map(const Tensor& a, const Tensor& b, double c1, double c2) {
  require_same("ssim_map", a, b);
  if (a.rank() != 4 || a.dim(2) < 2 || a.dim(3) < 2)
    throw ad::ShapeError("ssim_map: expected N x C x H x W with H, W >= 2, got " +
                         ad::shape_str(a.shape()));
  if (!(c1 > 0.0 && c2 > 0.0)) throw std::invalid_argument("ssim_map: constants must be > 0");
  using namespace ad;
  const Tensor mu_a = box_filter3(a);
  const Tensor mu_b = box_filter3(b);
  const Tensor mu_aa = mul(mu_a, mu_a);
  const Tensor mu_bb = mul(mu_b, mu_b);
  const Tensor mu_ab = mul(mu_a, mu_b);
  const Tensor var_a = sub(box_filter3(mul(a, a)), mu_aa);
  const Tensor var_b = sub(box_filter3(mul(b, b)), mu_bb);
  const Tensor cov = sub(box_filter3(mul(a, b)), mu_ab);
  const Tensor num = mul(add_scalar(scale(mu_ab, 2.0), c1), add_scalar(scale(cov, 2.0), c2));
  const Tensor den = mul(add_scalar(add(mu_aa, mu_bb), c1), add_scalar(add(var_a, var_b), c2));
  return mean(div(num, den), 1, true);
}

Tensor photometric_loss(const Tensor& left, const Tensor& reconstructed, const Tensor& validity,
                        const LossWeights& w) {
  if (photometric_forbidden > 0)
    throw std::logic_error("photometric_loss reached inside the distillation stage");
  require_same("photometric_loss", left, reconstructed);
  require_map("photometric_loss", validity);
  require_image_pair("photometric_loss", left, validity);
  const double count = value_sum(validity);
  if (count <= 0.0) throw std::runtime_error("photometric_loss: empty photometric support");

  using namespace ad;
  const Tensor valid = validity.detach();
  const Tensor l1 = mean(abs(sub(left, reconstructed)), 1, true);
  Tensor per_pixel = scale(l1, 1.0 - w.alpha);
  if (w.alpha > 0.0) {
    const Tensor dssim = scale(add_scalar(neg(ssim_map(left, reconstructed)), 1.0), w.alpha / 2.0);
    per_pixel = add(per_pixel, dssim);
  }
  return scale(sum(mul(per_pixel, valid)), 1.0 / count);
}

Tensor smoothness_loss(const Tensor& disp, const Tensor& image) {
  require_map("smoothness_loss", disp);
  require_image_pair("smoothness_loss", image, disp);
  const std::size_t h = disp.dim(2), w = disp.dim(3);
  if (h < 2 || w < 2) throw ad::ShapeError("smoothness_loss: need H, W >= 2");
  using namespace ad;
  auto diff = [](const Tensor& t, std::size_t axis, std::size_t len) {
    return abs(sub(slice(t, axis, 1, len - 1), slice(t, axis, 0, len - 1)));
  };
  const Tensor img = image.detach();
  const Tensor edge_x = exp(neg(mean(diff(img, 3, w), 1, true)));
  const Tensor edge_y = exp(neg(mean(diff(img, 2, h), 1, true)));
  const Tensor term_x = mean(mul(diff(disp, 3, w), edge_x));
  const Tensor term_y = mean(mul(diff(disp, 2, h), edge_y));
  return add(term_x, term_y);
}

Tensor feature_consistency_loss(const Tensor& adverse_left, const Tensor& adverse_right,
                                const Tensor& clear_left, const Tensor& clear_right) {
  require_same("feature_consistency_loss", adverse_left, clear_left);
  require_same("feature_consistency_loss", adverse_right, clear_right);
  require_same("feature_consistency_loss", adverse_left, adverse_right);
  if (adverse_left.rank() != 4)
    throw ad::ShapeError("feature_consistency_loss: expected N x C x H x W features");
  using namespace ad;
  constexpr double kEps = 1e-8;
  auto mean_cos = [&](const Tensor& adv, const Tensor& clr_in) {
    const Tensor clr = clr_in.detach();
    const Tensor dot = sum(mul(adv, clr), 1, true);
    const Tensor n2 = mul(sum(mul(adv, adv), 1, true), sum(mul(clr, clr), 1, true));
    return mean(div(dot, sqrt(n2, kEps * kEps)));
  };
  const Tensor cos_avg =
      scale(add(mean_cos(adverse_left, clear_left), mean_cos(adverse_right, clear_right)), 0.5);
  return add_scalar(neg(cos_avg), 1.0);
}

Tensor disparity_consistency_loss(const Tensor& clear_disp, const DisparitySequence& adverse_seq,
                                  const ConfidenceMask& mask, const LossWeights& w) {
  return sequence_masked_l1("disparity_consistency_loss", clear_disp, adverse_seq, mask, w.beta,
                            "empty consistency support");
}

Tensor kd_loss(const DisparitySequence& student_seq, const Tensor& teacher_disp,
               const ConfidenceMask& mask, const LossWeights& w) {
  return sequence_masked_l1("kd_loss", teacher_disp, student_seq, mask, w.beta,
                            "empty distillation support");
}

ConfidenceMask geometric_confidence_mask(const Tensor& disp_left, const Tensor& disp_right,
                                         double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("geometric_confidence_mask: tau must be > 0");
  require_map("geometric_confidence_mask", disp_left);
  require_same("geometric_confidence_mask", disp_left, disp_right);
  ad::NoGradGuard guard;
  const Tensor dl = disp_left.detach();
  const auto sampled = ad::sample_horizontal(disp_right.detach(), dl);
  const auto l = dl.data();
  const auto r = sampled.values.data();
  const auto ok = sampled.validity.data();
  std::vector<double> m(l.size());
  double ones = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = (ok[i] > 0.5 && std::abs(l[i] - r[i]) <= tau) ? 1.0 : 0.0;
    ones += m[i];
  }
  const double density = m.empty() ? 0.0 : ones / static_cast<double>(m.size());
  return {Tensor::from(dl.shape(), std::move(m)), density};
}

}  // namespace rose::stereo
