#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>

#include "rose/pipeline.hpp"
#include "rose/rng.hpp"

namespace rose::pipeline {

using model::PriorMode;
using model::Variant;
using model::WeightStore;

namespace {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + p.string());
}

// Chunk sizes of at most `batch` with no chunk of one unless n == 1, so
// batch normalization always sees two samples.
std::vector<std::size_t> chunks(std::size_t n, std::size_t batch) {
  std::vector<std::size_t> out;
  while (n > 0) {
    std::size_t take = std::min(batch, n);
    if (n - take == 1 && take > 2) --take;
    else if (n - take == 1) take = n;
    out.push_back(take);
    n -= take;
  }
  return out;
}

Tensor image_tensor(const std::vector<const sim::StereoSample*>& s, bool right_view, bool disp,
                    bool disp_right = false) {
  std::vector<const sim::Image*> v;
  for (const auto* x : s) v.push_back(disp ? (disp_right ? &x->disp_right : &x->disp_left)
                                           : (right_view ? &x->right : &x->left));
  return images_to_tensor(v);
}

}  // namespace

Predictor model_predictor(const WeightStore& ws, const model::ModelConfig& cfg, Variant v) {
  // Stage-0 weights have no prior branch yet and run the way they were trained.
  const PriorMode mode = ws.contains("prior.stem.w") ? PriorMode::frozen : PriorMode::tied;
  return [ws, cfg, v, mode](const EvalBatch& b) {
    ad::NoGradGuard ng;
    DisparityPair out;
    out.left = model::forward_pair(ws, cfg, b.left, b.right, v, mode).final();
    out.right = model::flip_predict_right(ws, cfg, b.left, b.right, v, mode);
    return out;
  };
}

Predictor sgm_predictor(const sgm::SgmConfig& cfg) {
  return [cfg](const EvalBatch& b) {
    std::vector<sim::Image> dl, dr;
    for (const auto* s : b.samples) {
      dl.push_back(sgm::sgm_disparity(s->left, s->right, cfg));
      // Flip trick: match the mirrored, swapped pair and mirror back.
      auto flip = [](const sim::Image& im) {
        sim::Image o = im;
        for (std::size_t c = 0; c < im.c; ++c)
          for (std::size_t y = 0; y < im.h; ++y)
            for (std::size_t x = 0; x < im.w; ++x) o.at(c, y, x) = im.at(c, y, im.w - 1 - x);
        return o;
      };
      dr.push_back(flip(sgm::sgm_disparity(flip(s->right), flip(s->left), cfg)));
    }
    std::vector<const sim::Image*> pl, pr;
    for (std::size_t i = 0; i < dl.size(); ++i) pl.push_back(&dl[i]), pr.push_back(&dr[i]);
    return DisparityPair{images_to_tensor(pl), images_to_tensor(pr)};
  };
}

Predictor oracle_predictor() {
  return [](const EvalBatch& b) {
    return DisparityPair{image_tensor(b.samples, false, true), image_tensor(b.samples, false, true, true)};
  };
}

const ConditionRow& MetricsReport::row(sim::Condition c) const {
  for (const auto& r : rows)
    if (r.condition == c) return r;
  throw std::out_of_range("no report row for condition " + std::string(sim::to_string(c)));
}

std::string MetricsReport::csv() const {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows)
    out += std::string(sim::to_string(r.condition)) + "," + std::to_string(r.samples) + "," +
           fmt6(r.epe) + "," + fmt6(r.bad1) + "," + fmt6(r.bad2) + "," + fmt6(r.bad3) + "," +
           fmt6(r.d1_or) + "," + fmt6(r.d1_and) + "," + fmt6(r.mask_density) + "\n";
  return out;
}

MetricsReport evaluate(const Predictor& pred, const StageConfig& cfg) {
  if (cfg.val_scenes == 0) throw std::invalid_argument("evaluate: val_scenes must be >= 1");
  if (cfg.eval_batch < 1) throw std::invalid_argument("evaluate: eval_batch must be >= 1");
  std::vector<sim::StereoSample> clear;
  for (std::size_t i = 0; i < cfg.val_scenes; ++i) clear.push_back(validation_scene(cfg, i));

  MetricsReport report;
  for (const auto cond : cfg.eval_conditions) {
    for (const auto& r : report.rows)
      if (r.condition == cond) throw std::invalid_argument("evaluate: duplicate condition");
    std::vector<sim::StereoSample> samples;
    for (std::size_t i = 0; i < clear.size(); ++i)
      samples.push_back(degraded(clear[i], cfg, cond,
                                 mix_seed(mix_seed(cfg.val_seed, 0xE7A, i), static_cast<std::uint64_t>(cond))));

    std::vector<double> disp, gt;
    std::vector<std::uint8_t> mask, d1_mask;
    double consistent = 0, pixels = 0;
    std::size_t start = 0;
    for (const std::size_t n : chunks(samples.size(), cfg.eval_batch)) {
      EvalBatch b;
      for (std::size_t i = start; i < start + n; ++i) b.samples.push_back(&samples[i]);
      b.left = image_tensor(b.samples, false, false);
      b.right = image_tensor(b.samples, true, false);
      const DisparityPair dp = pred(b);
      const auto cm = stereo::geometric_confidence_mask(dp.left, dp.right, cfg.weights.tau);
      for (double v : cm.values.data()) consistent += v;
      pixels += static_cast<double>(cm.values.numel());
      disp.insert(disp.end(), dp.left.data().begin(), dp.left.data().end());
      for (const auto* s : b.samples) {
        gt.insert(gt.end(), s->disp_left.data.begin(), s->disp_left.data.end());
        for (std::size_t p = 0; p < s->occ_left.data.size(); ++p) {
          const bool occ = s->occ_left.data[p] != 0;
          const bool keep = cfg.eval_mask == MaskPolicy::all || (cfg.eval_mask == MaskPolicy::noc && !occ) ||
                            (cfg.eval_mask == MaskPolicy::occ && occ);
          mask.push_back(keep ? 1 : 0);
          d1_mask.push_back(keep && s->disp_left.data[p] > 0 ? 1 : 0);
        }
      }
      start += n;
    }
    ConditionRow row;
    row.condition = cond;
    row.samples = samples.size();
    row.epe = stereo::metric_epe(disp, gt, mask);
    row.bad1 = stereo::metric_bad(disp, gt, mask, 1.0);
    row.bad2 = stereo::metric_bad(disp, gt, mask, 2.0);
    row.bad3 = stereo::metric_bad(disp, gt, mask, 3.0);
    bool any_d1 = false;
    for (auto v : d1_mask) any_d1 = any_d1 || v;
    if (any_d1) {
      row.d1_or = stereo::metric_d1(disp, gt, d1_mask, stereo::D1Rule::kOr);
      row.d1_and = stereo::metric_d1(disp, gt, d1_mask, stereo::D1Rule::kAnd);
    }
    row.mask_density = consistent / pixels;
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------

bool has_manifest(const std::filesystem::path& dir) { return std::filesystem::exists(dir / "manifest.txt"); }

void write_manifest(const std::filesystem::path& dir, const StageConfig& cfg,
                    const std::map<std::string, std::string>& extra, bool force) {
  if (has_manifest(dir) && !force)
    throw std::runtime_error("refusing to overwrite " + (dir / "manifest.txt").string() +
                             " (pass --force)");
  std::filesystem::create_directories(dir);
  const std::string version = kCodeVersion;
  std::string text;
  text += "stage = " + to_string(cfg.stage) + "\n";
  text += "seed = " + std::to_string(cfg.seed) + "\n";
  text += "config_hash = " + hex(config_hash(cfg)) + "\n";
  text += "rng = " + std::string(kRngAlgorithm) + "\n";
  text += "code_version = " + version + "\n";
  text += "code_hash = " + hex(sim::fnv1a(version.data(), version.size())) + "\n";
  for (const auto& [k, v] : extra) text += k + " = " + v + "\n";
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  text += "timestamp = " + std::string(stamp) + "\n";
  write_text(dir / "manifest.txt", text);
}

void run_stage(const StageConfig& cfg, const std::filesystem::path& out, bool force,
               const std::function<void(const LossRow&)>& progress) {
  cfg.validate();
  if (has_manifest(out) && !force)
    throw std::runtime_error("refusing to overwrite " + (out / "manifest.txt").string() +
                             " (pass --force)");
  const auto m = effective_model(cfg);
  TrainLog log;
  log.progress = progress;
  WeightStore ws;
  switch (cfg.stage) {
    case Stage::pretrain:
      ws = stage0_pretrain(cfg, &log);
      break;
    case Stage::step1: {
      if (cfg.init.empty()) throw std::invalid_argument("config: step1 requires init (stage0 checkpoint)");
      ws = stage1_scene_correspondence(cfg, WeightStore::load(cfg.init), &log);
      break;
    }
    case Stage::step2: {
      if (cfg.teacher.empty()) throw std::invalid_argument("config: step2 requires a teacher checkpoint path");
      const WeightStore teacher = frozen_copy(WeightStore::load(cfg.teacher));
      const WeightStore init = cfg.init.empty() ? teacher : WeightStore::load(cfg.init);
      ws = stage2_distill(cfg, teacher, init, &log);
      break;
    }
    case Stage::eval:
      if (cfg.weights_path.empty()) throw std::invalid_argument("config: eval requires weights");
      ws = WeightStore::load(cfg.weights_path);
      break;
  }
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";

  std::filesystem::create_directories(out);
  std::map<std::string, std::string> extra;
  if (cfg.stage != Stage::eval) {
    ws.save(out / "weights.ckpt");
    write_text(out / "loss_curve.csv", log.loss_csv());
    if (cfg.stage == Stage::step1) write_text(out / "fc_track.csv", log.fc_csv());
    extra["skipped_batches"] = std::to_string(log.skipped);
  }
  if (cfg.val_scenes > 0) {
    Variant v = cfg.eval_variant;
    if (v == Variant::adverse && !m.extractor.afem_enabled) v = Variant::clear;
    write_text(out / "metrics.csv", evaluate(model_predictor(ws, m, v), cfg).csv());
  }
  write_text(out / "config.txt", config_text(cfg));
  write_manifest(out, cfg, extra, true);
}

}  // namespace rose::pipeline
