#include <cmath>
#include <cstdio>
#include <numbers>

#include "rose/pipeline.hpp"
#include "rose/rng.hpp"

namespace rose::pipeline {

using model::PriorMode;
using model::Variant;
using model::WeightStore;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Tensor stack_left(const std::vector<sim::StereoSample>& s) {
  std::vector<const sim::Image*> v;
  for (const auto& x : s) v.push_back(&x.left);
  return images_to_tensor(v);
}
Tensor stack_right(const std::vector<sim::StereoSample>& s) {
  std::vector<const sim::Image*> v;
  for (const auto& x : s) v.push_back(&x.right);
  return images_to_tensor(v);
}
Tensor stack_disp(const std::vector<sim::StereoSample>& s) {
  std::vector<const sim::Image*> v;
  for (const auto& x : s) v.push_back(&x.disp_left);
  return images_to_tensor(v);
}

// sum_i beta^(K-1-i) mean |D_i - gt| over every pixel.
Tensor supervised_sequence_loss(const stereo::DisparitySequence& seq, const Tensor& gt, double beta) {
  Tensor total = Tensor::scalar(0.0);
  const std::size_t k = seq.size();
  for (std::size_t i = 0; i < k; ++i) {
    const double w = std::pow(beta, static_cast<double>(k - 1 - i));
    total = ad::add(total, ad::scale(ad::mean(ad::abs(ad::sub(seq[i], gt))), w));
  }
  return total;
}

Tensor photo_term(const Tensor& left, const Tensor& right, const Tensor& disp,
                  const stereo::LossWeights& w) {
  const auto warp = stereo::warp_right_to_left(right, disp);
  return stereo::photometric_loss(left, warp.image, warp.validity, w);
}

void check_finite(double v, std::size_t it, const char* stage) {
  if (!std::isfinite(v))
    throw DivergenceError(std::string(stage) + ": loss is not finite at iteration " +
                          std::to_string(it) + " (diverged)");
}

double pooled_std(const Tensor& t) {
  const auto d = t.data();
  double mean = 0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double var = 0;
  for (double v : d) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(d.size()));
}

void optimizer_step(WeightStore& ws, AdamW& opt, const StageConfig& cfg, std::size_t it) {
  if (cfg.grad_clip > 0) clip_gradients(ws, cfg.grad_clip);
  opt.step(ws, lr_at(it, cfg.iterations, cfg.lr, cfg.warmup_frac));
  ws.zero_grad();
}

void record(TrainLog* log, std::size_t it, double lr, double total, std::map<std::string, double> terms) {
  if (!log) return;
  log->rows.push_back({it, lr, total, std::move(terms)});
  if (log->progress) log->progress(log->rows.back());
}

// Trainable everywhere except the prior branch.
WeightStore thaw_except_prior(const WeightStore& ws) {
  WeightStore out;
  for (const auto& n : ws.names()) out.add(n, ws.get(n), n.rfind("prior.", 0) == 0);
  return out;
}

std::uint64_t model_seed(const StageConfig& cfg) { return mix_seed(cfg.seed, 0x30DE1); }

}  // namespace

// ---------------------------------------------------------------------------

double lr_at(std::size_t it, std::size_t total, double base, double warmup_frac) {
  if (total == 0) return base;
  const auto warm = static_cast<std::size_t>(std::ceil(warmup_frac * static_cast<double>(total)));
  if (it < warm) return base * static_cast<double>(it + 1) / static_cast<double>(warm);
  const double span = static_cast<double>(total - warm);
  const double t = span > 0 ? static_cast<double>(it - warm) / span : 0.0;
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

void AdamW::step(WeightStore& ws, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto& [name, t] : ws.trainable()) {
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) m.assign(g.size(), 0.0), v.assign(g.size(), 0.0);
    auto x = t.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      x[i] -= lr * wd_ * x[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_gradients(WeightStore& ws, double max_norm) {
  double sq = 0;
  auto params = ws.trainable();
  for (auto& [_, t] : params)
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double s = max_norm / norm;
    for (auto& [_, t] : params)
      if (t.has_grad())
        for (auto& g : t.node_ptr()->grad) g *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------

Tensor images_to_tensor(const std::vector<const sim::Image*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const auto& f = *images.front();
  std::vector<double> v;
  v.reserve(images.size() * f.data.size());
  for (const auto* im : images) {
    if (im->c != f.c || im->h != f.h || im->w != f.w)
      throw std::invalid_argument("images_to_tensor: image sizes differ");
    v.insert(v.end(), im->data.begin(), im->data.end());
  }
  return Tensor::from({images.size(), f.c, f.h, f.w}, std::move(v));
}

std::vector<sim::Image> tensor_to_images(const Tensor& t) {
  if (t.rank() != 4) throw ad::ShapeError("tensor_to_images: expected rank 4");
  std::vector<sim::Image> out;
  const std::size_t per = t.dim(1) * t.dim(2) * t.dim(3);
  for (std::size_t n = 0; n < t.dim(0); ++n) {
    sim::Image im(t.dim(1), t.dim(2), t.dim(3));
    std::copy_n(t.data().begin() + static_cast<long>(n * per), per, im.data.begin());
    out.push_back(std::move(im));
  }
  return out;
}

std::uint64_t training_sample_seed(const StageConfig& cfg, std::size_t it, std::size_t slot) {
  return mix_seed(cfg.seed, 0x7EA1, it * cfg.batch + slot);
}

sim::StereoSample training_scene(const StageConfig& cfg, std::size_t it, std::size_t slot) {
  return sim::generate_scene(training_sample_seed(cfg, it, slot), cfg.scene);
}

sim::StereoSample validation_scene(const StageConfig& cfg, std::size_t i) {
  return sim::generate_scene(mix_seed(cfg.val_seed, 0x5A1, i), cfg.scene);
}

sim::StereoSample degraded(const sim::StereoSample& s, const StageConfig& cfg, sim::Condition c,
                           std::uint64_t seed) {
  sim::DegradationSpec spec = cfg.degradation;
  spec.kind = c;
  spec.seed = seed;
  return sim::degrade(s, spec);
}

WeightStore frozen_copy(const WeightStore& ws) {
  WeightStore out = ws.clone();
  out.freeze_prefix("");
  return out;
}

std::string TrainLog::loss_csv() const {
  std::string out = "iteration,lr,total";
  for (const auto& c : columns) out += "," + c;
  out += "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iteration) + "," + fmt(r.lr) + "," + fmt(r.total);
    for (const auto& c : columns) {
      const auto it = r.terms.find(c);
      out += "," + (it == r.terms.end() ? std::string() : fmt(it->second));
    }
    out += "\n";
  }
  return out;
}

std::string TrainLog::fc_csv() const {
  std::string out = "epoch,feature_consistency\n";
  for (const auto& [e, v] : fc_track) out += std::to_string(e) + "," + fmt(v) + "\n";
  return out;
}

CollapseError::CollapseError(std::size_t it, double s)
    : std::runtime_error("consistency-only collapse: std(D_K) = " + fmt(s) + " px at iteration " +
                         std::to_string(it)),
      iteration(it),
      std_px(s) {}

// ---------------------------------------------------------------------------
// Stage 0

WeightStore stage0_pretrain(const StageConfig& cfg, TrainLog* log) {
  cfg.validate();
  const auto m = effective_model(cfg);
  WeightStore ws = model::init_weights(m, model_seed(cfg));
  const bool sup = cfg.supervision == Supervision::supervised;
  if (log) log->columns = sup ? std::vector<std::string>{"sequence_l1", "epe"}
                              : std::vector<std::string>{"photometric", "smoothness"};
  AdamW opt(cfg.weight_decay);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<sim::StereoSample> batch;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      auto s = training_scene(cfg, it, b);
      if (cfg.augment)
        s = sim::asymmetric_augment(s, mix_seed(training_sample_seed(cfg, it, b), 0xA06), cfg.augment_cfg).sample;
      batch.push_back(std::move(s));
    }
    const Tensor l = stack_left(batch), r = stack_right(batch);
    const auto p = model::forward_pair(ws, m, l, r, Variant::clear, PriorMode::tied);
    Tensor loss;
    std::map<std::string, double> terms;
    if (sup) {
      const Tensor gt = stack_disp(batch);
      loss = supervised_sequence_loss(p.seq, gt, cfg.weights.beta);
      terms["sequence_l1"] = loss.item();
      ad::NoGradGuard ng;
      terms["epe"] = ad::mean(ad::abs(ad::sub(p.final(), gt))).item();
    } else {
      const Tensor ph = photo_term(l, r, p.final(), cfg.weights);
      const Tensor sm = stereo::smoothness_loss(p.final(), l);
      loss = ad::add(ad::scale(ph, cfg.weights.lambda1), ad::scale(sm, cfg.weights.lambda2));
      terms["photometric"] = ph.item();
      terms["smoothness"] = sm.item();
    }
    check_finite(loss.item(), it, "pretrain");
    loss.backward();
    record(log, it, lr_at(it, cfg.iterations, cfg.lr, cfg.warmup_frac), loss.item(), std::move(terms));
    optimizer_step(ws, opt, cfg, it);
  }
  return ws;
}

// ---------------------------------------------------------------------------
// Step 1

Step1Terms step1_terms(const WeightStore& ws, const StageConfig& cfg,
                       const std::vector<sim::StereoSample>& clear,
                       const std::vector<sim::StereoSample>& adverse) {
  const auto m = effective_model(cfg);
  const auto& w = cfg.weights;
  const Tensor lc = stack_left(clear), rc = stack_right(clear);
  const Tensor la = stack_left(adverse), ra = stack_right(adverse);
  Step1Terms out;

  const auto pc = model::forward_pair(ws, m, lc, rc, Variant::clear, PriorMode::frozen);
  const Tensor dc = pc.final();
  Tensor total = Tensor::scalar(0.0);
  auto add_term = [&](const std::string& name, const Tensor& t, double weight) {
    out.values[name] = t.item();
    if (weight != 0.0) total = ad::add(total, ad::scale(t, weight));
  };

  if (w.lambda1 != 0.0) add_term("photo_clear", photo_term(lc, rc, dc, w), w.lambda1);
  if (w.lambda2 != 0.0) add_term("smooth_clear", stereo::smoothness_loss(dc, lc), w.lambda2);

  const auto pa = model::forward_pair(ws, m, la, ra, Variant::adverse, PriorMode::frozen);
  const Tensor da = pa.final();
  if (w.lambda1 != 0.0) add_term("photo_adverse", photo_term(la, ra, da, w), w.lambda1);
  if (w.lambda2 != 0.0) add_term("smooth_adverse", stereo::smoothness_loss(da, la), w.lambda2);
  {
    const Tensor fc = stereo::feature_consistency_loss(pa.features.left, pa.features.right,
                                                       pc.features.left, pc.features.right);
    add_term("feature_consistency", fc, w.lambda3);
  }
  if (w.lambda4 != 0.0) {
    stereo::ConfidenceMask mask;
    {
      ad::NoGradGuard ng;
      const Tensor dr = model::flip_predict_right(ws, m, lc, rc, Variant::clear, PriorMode::frozen);
      mask = stereo::geometric_confidence_mask(dc.detach(), dr, w.tau);
    }
    out.values["mask_density"] = mask.density;
    if (mask.density > 0)
      add_term("disparity_consistency", stereo::disparity_consistency_loss(dc, pa.seq, mask, w), w.lambda4);
  }
  out.total = total;
  return out;
}

WeightStore stage1_scene_correspondence(const StageConfig& cfg, const WeightStore& init, TrainLog* log) {
  cfg.validate();
  const auto m = effective_model(cfg);
  if (!m.extractor.afem_enabled) throw std::invalid_argument("step1 requires afem = 1");
  WeightStore ws = thaw_except_prior(init);
  if (!ws.contains("prior.stem.w")) model::attach_prior(ws);
  const WeightStore prior_before = ws.clone();

  if (log)
    log->columns = {"photo_clear", "smooth_clear", "photo_adverse", "smooth_adverse",
                    "feature_consistency", "disparity_consistency", "mask_density"};

  // Fixed monitor batch for the collapse guard.
  std::vector<sim::StereoSample> monitor;
  for (std::size_t b = 0; b < cfg.batch; ++b) {
    const auto s = validation_scene(cfg, b);
    monitor.push_back(degraded(s, cfg, cfg.conditions.front(), mix_seed(cfg.val_seed, 0xD06, b)));
  }
  const Tensor ml = stack_left(monitor), mr = stack_right(monitor);
  auto check_collapse = [&](std::size_t it) {
    ad::NoGradGuard ng;
    const auto p = model::forward_pair(ws, m, ml, mr, Variant::adverse, PriorMode::frozen);
    const double s = pooled_std(p.final());
    if (s < cfg.collapse_threshold) throw CollapseError(it, s);
  };

  AdamW opt(cfg.weight_decay);
  double fc_sum = 0;
  std::size_t fc_n = 0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<sim::StereoSample> clear, adverse;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::uint64_t seed = training_sample_seed(cfg, it, b);
      clear.push_back(sim::generate_scene(seed, cfg.scene));
      Rng pick(mix_seed(seed, 0xC0D));
      const auto cond = cfg.conditions[pick.index(cfg.conditions.size())];
      adverse.push_back(degraded(clear.back(), cfg, cond, mix_seed(seed, 0xDE6)));
    }
    auto terms = step1_terms(ws, cfg, clear, adverse);
    const double total = terms.total.item();
    check_finite(total, it, "step1");
    if (terms.total.requires_grad()) terms.total.backward();
    fc_sum += terms.values["feature_consistency"];
    ++fc_n;
    if ((it + 1) % cfg.epoch_iters == 0 || it + 1 == cfg.iterations) {
      if (log) log->fc_track.emplace_back(it / cfg.epoch_iters, fc_sum / static_cast<double>(fc_n));
      fc_sum = 0;
      fc_n = 0;
    }
    record(log, it, lr_at(it, cfg.iterations, cfg.lr, cfg.warmup_frac), total, std::move(terms.values));
    optimizer_step(ws, opt, cfg, it);
    if (cfg.collapse_every > 0 && ((it + 1) % cfg.collapse_every == 0 || it + 1 == cfg.iterations))
      check_collapse(it);
  }

  for (const auto& n : ws.names())
    if (n.rfind("prior.", 0) == 0 && !(ws.get(n).data().size() == prior_before.get(n).data().size() &&
                                       std::equal(ws.get(n).data().begin(), ws.get(n).data().end(),
                                                  prior_before.get(n).data().begin())))
      throw std::logic_error("prior parameter changed during step1: " + n);
  return ws;
}

// ---------------------------------------------------------------------------
// Step 2

WeightStore stage2_distill(const StageConfig& cfg, const WeightStore& teacher,
                           const WeightStore& student_init, TrainLog* log) {
  cfg.validate();
  if (!teacher.all_frozen()) throw std::invalid_argument("step2: teacher must be fully frozen");
  if (!teacher.contains("prior.stem.w")) throw std::runtime_error("prior encoder requires stage0 checkpoint");
  const auto m = effective_model(cfg);
  if (!m.extractor.afem_enabled) throw std::invalid_argument("step2 requires afem = 1");

  WeightStore student;
  if (cfg.from_scratch) {
    student = model::init_weights(m, model_seed(cfg));
    for (const auto& n : teacher.names())
      if (n.rfind("prior.", 0) == 0) student.add(n, teacher.get(n), true);
  } else {
    student = thaw_except_prior(student_init);
    if (!student.contains("prior.stem.w")) throw std::runtime_error("prior encoder requires stage0 checkpoint");
  }

  // Any path into the photometric term is a bug in this stage.
  stereo::PhotometricLossForbidden forbid;
  if (log) log->columns = {"kd", "mask_density"};
  AdamW opt(cfg.weight_decay);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<sim::StereoSample> clear, input;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::uint64_t seed = training_sample_seed(cfg, it, b);
      clear.push_back(sim::generate_scene(seed, cfg.scene));
      Rng pick(mix_seed(seed, 0xC0D));
      const auto cond = cfg.mix_conditions[pick.index(cfg.mix_conditions.size())];
      auto s = degraded(clear.back(), cfg, cond, mix_seed(seed, 0xDE6));
      if (cfg.augment) s = sim::asymmetric_augment(s, mix_seed(seed, 0xA06), cfg.augment_cfg).sample;
      input.push_back(std::move(s));
    }
    const Tensor lc = stack_left(clear), rc = stack_right(clear);
    Tensor target;
    stereo::ConfidenceMask mask;
    {
      ad::NoGradGuard ng;
      target = model::forward_pair(teacher, m, lc, rc, Variant::clear, PriorMode::frozen).final();
      const Tensor dr = model::flip_predict_right(teacher, m, lc, rc, Variant::clear, PriorMode::frozen);
      mask = stereo::geometric_confidence_mask(target, dr, cfg.weights.tau);
    }
    const double lr = lr_at(it, cfg.iterations, cfg.lr, cfg.warmup_frac);
    if (mask.density == 0.0) {
      if (log) {
        log->warnings.push_back("step2 iteration " + std::to_string(it) +
                                ": empty confidence mask, batch skipped");
        ++log->skipped;
      }
      record(log, it, lr, 0.0, {{"mask_density", 0.0}});
      continue;
    }
    const auto ps = model::forward_pair(student, m, stack_left(input), stack_right(input),
                                        Variant::adverse, PriorMode::frozen);
    const Tensor loss = stereo::kd_loss(ps.seq, target, mask, cfg.weights);
    check_finite(loss.item(), it, "step2");
    loss.backward();
    record(log, it, lr, loss.item(), {{"kd", loss.item()}, {"mask_density", mask.density}});
    optimizer_step(student, opt, cfg, it);
  }
  return student;
}

}  // namespace rose::pipeline
