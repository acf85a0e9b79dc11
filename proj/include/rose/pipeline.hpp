#pragma once

// Training stages and the evaluation harness.
//
// Stage 0 pretrains on clear scenes (supervised, or photometric-only for the
// pretraining comparison). Step 1 trains clear and adverse branches on
// paired clear/degraded scenes. Step 2 distills a frozen Step-1 teacher into
// a student that sees mixed, augmented inputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rose/model.hpp"
#include "rose/sgm.hpp"
#include "rose/stereo_ops.hpp"
#include "rose/weather_sim.hpp"

namespace rose::pipeline {

using ad::Tensor;

enum class Stage { pretrain, step1, step2, eval };
enum class Supervision { supervised, photometric };
enum class MaskPolicy { all, noc, occ };

std::string to_string(Stage s);
std::string to_string(MaskPolicy p);

/// Model defaults with d_max_quarter derived from the scene (0).
inline model::ModelConfig default_stage_model() {
  model::ModelConfig m;
  m.matcher.d_max_quarter = 0;
  return m;
}

/// Version string hashed into manifests.
inline constexpr const char* kCodeVersion = "rose 0.3.0";

struct StageConfig {
  Stage stage = Stage::pretrain;
  std::size_t iterations = 300;
  std::size_t batch = 4;
  double lr = 1e-3;
  double warmup_frac = 0.05;
  double weight_decay = 1e-4;
  double grad_clip = 0.0;  // global gradient norm; 0 disables
  std::uint64_t seed = 0;

  stereo::LossWeights weights;
  sim::SceneConfig scene;
  model::ModelConfig model = default_stage_model();
  /// Stage 0 objective.
  Supervision supervision = Supervision::supervised;

  /// Step 1: conditions of the degraded counterpart.
  std::vector<sim::Condition> conditions = {sim::Condition::fog, sim::Condition::rain,
                                            sim::Condition::night};
  /// Step 2: student input mix, sampled uniformly.
  std::vector<sim::Condition> mix_conditions = {sim::Condition::clear, sim::Condition::fog,
                                                sim::Condition::rain, sim::Condition::night};
  sim::DegradationSpec degradation;  // parameters; kind and seed are set per sample
  bool augment = false;
  sim::AugmentConfig augment_cfg;

  double collapse_threshold = 0.05;  // px, std of D_K on the monitor batch
  std::size_t collapse_every = 25;
  std::size_t epoch_iters = 50;

  std::string init;     // checkpoint to start from (step1, step2)
  std::string teacher;  // step2
  bool from_scratch = false;

  // Evaluation
  std::vector<sim::Condition> eval_conditions = {sim::Condition::clear, sim::Condition::fog,
                                                 sim::Condition::rain, sim::Condition::night};
  std::size_t val_scenes = 8;
  std::uint64_t val_seed = 1000003;
  MaskPolicy eval_mask = MaskPolicy::all;
  model::Variant eval_variant = model::Variant::adverse;
  std::size_t eval_batch = 4;
  std::string weights_path;  // eval stage

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every accepted key, in canonical order.
const std::vector<ConfigKey>& config_keys();

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, bad values
/// and duplicates throw std::invalid_argument with the line number.
StageConfig parse_config(const std::string& text, StageConfig base = {});
StageConfig load_config(const std::filesystem::path& path);
/// Sets one key; used by the parser and by command-line overrides.
void set_key(StageConfig& cfg, const std::string& key, const std::string& value);
/// Canonical `key = value` text covering every key.
std::string config_text(const StageConfig& cfg);
std::uint64_t config_hash(const StageConfig& cfg);

/// Model config with d_max_quarter filled in from the scene when left at 0.
model::ModelConfig effective_model(const StageConfig& cfg);

// ---------------------------------------------------------------------------
// Optimisation

/// Linear warmup to base then cosine decay to 0.
double lr_at(std::size_t it, std::size_t total, double base, double warmup_frac);

/// Decoupled weight decay Adam, beta1 0.9, beta2 0.999.
class AdamW {
 public:
  AdamW(double weight_decay, double eps = 1e-8) : wd_(weight_decay), eps_(eps) {}
  /// Applies one step to every trainable parameter that has a gradient.
  void step(model::WeightStore& ws, double lr);
  std::size_t steps() const { return t_; }

 private:
  double wd_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

/// Scales gradients so their global norm is at most max_norm. Returns the
/// norm before scaling.
double clip_gradients(model::WeightStore& ws, double max_norm);

// ---------------------------------------------------------------------------
// Data

/// Stacks images into N x C x H x W.
Tensor images_to_tensor(const std::vector<const sim::Image*>& images);
/// Splits N x C x H x W back into images.
std::vector<sim::Image> tensor_to_images(const Tensor& t);

/// Training scene for (iteration, slot); deterministic in cfg.seed.
sim::StereoSample training_scene(const StageConfig& cfg, std::size_t it, std::size_t slot);
std::uint64_t training_sample_seed(const StageConfig& cfg, std::size_t it, std::size_t slot);
/// Validation scene i: depends on val_seed and the scene config only.
sim::StereoSample validation_scene(const StageConfig& cfg, std::size_t i);
/// Degraded counterpart with a condition-specific seed.
sim::StereoSample degraded(const sim::StereoSample& s, const StageConfig& cfg, sim::Condition c,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Stages

struct LossRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double total = 0.0;
  std::map<std::string, double> terms;
};

struct TrainLog {
  std::vector<std::string> columns;  // term names, fixed per stage
  std::vector<LossRow> rows;
  std::vector<std::pair<std::size_t, double>> fc_track;  // epoch, mean L_fc
  std::vector<std::string> warnings;
  std::size_t skipped = 0;
  /// Called after each row is appended; optional.
  std::function<void(const LossRow&)> progress;

  std::string loss_csv() const;
  std::string fc_csv() const;
};

class CollapseError : public std::runtime_error {
 public:
  CollapseError(std::size_t iteration, double std_px);
  std::size_t iteration;
  double std_px;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

model::WeightStore stage0_pretrain(const StageConfig& cfg, TrainLog* log = nullptr);
/// Attaches the prior branch from init's encoder when init has none.
model::WeightStore stage1_scene_correspondence(const StageConfig& cfg,
                                               const model::WeightStore& init,
                                               TrainLog* log = nullptr);
/// teacher must be fully frozen.
model::WeightStore stage2_distill(const StageConfig& cfg, const model::WeightStore& teacher,
                                  const model::WeightStore& student_init, TrainLog* log = nullptr);

/// Step-1 loss terms for one batch, as used by the training loop. Exposed
/// for tests. Terms with a zero weight are left out of total.
struct Step1Terms {
  Tensor total;
  std::map<std::string, double> values;
};
Step1Terms step1_terms(const model::WeightStore& ws, const StageConfig& cfg,
                       const std::vector<sim::StereoSample>& clear,
                       const std::vector<sim::StereoSample>& adverse);

/// Returns a fully frozen copy.
model::WeightStore frozen_copy(const model::WeightStore& ws);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalBatch {
  Tensor left, right;
  std::vector<const sim::StereoSample*> samples;
};

struct DisparityPair {
  Tensor left, right;  // N x 1 x H x W
};

using Predictor = std::function<DisparityPair(const EvalBatch&)>;

Predictor model_predictor(const model::WeightStore& ws, const model::ModelConfig& cfg,
                          model::Variant v);
Predictor sgm_predictor(const sgm::SgmConfig& cfg);
/// Returns ground truth; used to check the harness.
Predictor oracle_predictor();

struct ConditionRow {
  sim::Condition condition = sim::Condition::clear;
  std::size_t samples = 0;
  double epe = 0, bad1 = 0, bad2 = 0, bad3 = 0, d1_or = 0, d1_and = 0, mask_density = 0;
};

struct MetricsReport {
  std::vector<ConditionRow> rows;
  const ConditionRow& row(sim::Condition c) const;
  /// Header: condition,samples,epe,bad1,bad2,bad3,d1_or,d1_and,mask_density
  std::string csv() const;
};

inline constexpr const char* kMetricsHeader =
    "condition,samples,epe,bad1,bad2,bad3,d1_or,d1_and,mask_density";

/// Runs pred over cfg.val_scenes validation scenes per condition. Metrics
/// pool every pixel selected by cfg.eval_mask. mask_density is the mean
/// left-right-consistent fraction of the predictions.
MetricsReport evaluate(const Predictor& pred, const StageConfig& cfg);

// ---------------------------------------------------------------------------
// Run directories

/// Writes manifest.txt; throws std::runtime_error when one exists and
/// force is false.
void write_manifest(const std::filesystem::path& dir, const StageConfig& cfg,
                    const std::map<std::string, std::string>& extra, bool force);
bool has_manifest(const std::filesystem::path& dir);

/// Loads checkpoints named by cfg, runs the configured stage and writes
/// weights.ckpt, loss_curve.csv, fc_track.csv (step 1), metrics.csv and
/// manifest.txt under out.
void run_stage(const StageConfig& cfg, const std::filesystem::path& out, bool force,
               const std::function<void(const LossRow&)>& progress = {});

}  // namespace rose::pipeline
