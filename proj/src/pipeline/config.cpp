#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rose/pipeline.hpp"

namespace rose::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v, const std::string& want) {
  throw std::invalid_argument("key '" + key + "': cannot parse '" + v + "' as " + want);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(out)) bad_value(key, v, "a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<sim::Condition> to_conditions(const std::string& key, const std::string& v) {
  std::vector<sim::Condition> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    try {
      out.push_back(sim::parse_condition(part));
    } catch (const std::exception&) {
      bad_value(key, part, "a condition (clear, fog, rain, night)");
    }
  }
  if (out.empty()) bad_value(key, v, "a comma-separated condition list");
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string conds(const std::vector<sim::Condition>& cs) {
  std::string out;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (i) out += ",";
    out += sim::to_string(cs[i]);
  }
  return out;
}

struct KeyDef {
  ConfigKey info;
  std::function<void(StageConfig&, const std::string&)> set;
  std::function<std::string(const StageConfig&)> get;
};

#define ROSE_KEY_NUM(name, help, field)                                                   \
  KeyDef {                                                                                \
    {name, help}, [](StageConfig& c, const std::string& v) { c.field = to_double(name, v); }, \
        [](const StageConfig& c) { return num(c.field); }                                 \
  }
#define ROSE_KEY_INT(name, help, field)                                                        \
  KeyDef {                                                                                     \
    {name, help},                                                                              \
        [](StageConfig& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(to_u64(name, v)); }, \
        [](const StageConfig& c) { return std::to_string(c.field); }                           \
  }
#define ROSE_KEY_BOOL(name, help, field)                                                  \
  KeyDef {                                                                                \
    {name, help}, [](StageConfig& c, const std::string& v) { c.field = to_bool(name, v); }, \
        [](const StageConfig& c) { return std::string(c.field ? "1" : "0"); }             \
  }
#define ROSE_KEY_STR(name, help, field)                                            \
  KeyDef {                                                                         \
    {name, help}, [](StageConfig& c, const std::string& v) { c.field = v; },       \
        [](const StageConfig& c) { return c.field; }                               \
  }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      KeyDef{{"stage", "pretrain | step1 | step2 | eval"},
             [](StageConfig& c, const std::string& v) {
               if (v == "pretrain") c.stage = Stage::pretrain;
               else if (v == "step1") c.stage = Stage::step1;
               else if (v == "step2") c.stage = Stage::step2;
               else if (v == "eval") c.stage = Stage::eval;
               else bad_value("stage", v, "pretrain, step1, step2 or eval");
             },
             [](const StageConfig& c) { return to_string(c.stage); }},
      ROSE_KEY_INT("iterations", "optimizer steps", iterations),
      ROSE_KEY_INT("batch", "scenes per step", batch),
      ROSE_KEY_NUM("lr", "peak learning rate", lr),
      ROSE_KEY_NUM("warmup_frac", "fraction of steps spent in linear warmup", warmup_frac),
      ROSE_KEY_NUM("weight_decay", "decoupled weight decay", weight_decay),
      ROSE_KEY_NUM("grad_clip", "global gradient norm clip, 0 = off", grad_clip),
      ROSE_KEY_INT("seed", "run seed (data order and initialization)", seed),
      ROSE_KEY_NUM("alpha", "SSIM share of the photometric loss", weights.alpha),
      ROSE_KEY_NUM("lambda1", "photometric weight", weights.lambda1),
      ROSE_KEY_NUM("lambda2", "smoothness weight", weights.lambda2),
      ROSE_KEY_NUM("lambda3", "feature consistency weight", weights.lambda3),
      ROSE_KEY_NUM("lambda4", "disparity consistency weight", weights.lambda4),
      ROSE_KEY_NUM("beta", "sequence loss decay", weights.beta),
      ROSE_KEY_NUM("tau", "left-right check threshold, px", weights.tau),
      KeyDef{{"K", "refinement iterations"},
             [](StageConfig& c, const std::string& v) {
               c.weights.n_iters = c.model.matcher.iterations = to_u64("K", v);
             },
             [](const StageConfig& c) { return std::to_string(c.model.matcher.iterations); }},
      ROSE_KEY_INT("height", "scene height", scene.height),
      ROSE_KEY_INT("width", "scene width", scene.width),
      ROSE_KEY_NUM("d_max", "exclusive scene disparity bound, px", scene.d_max),
      ROSE_KEY_INT("n_layers", "planes per scene including the background", scene.n_layers),
      ROSE_KEY_NUM("texture_cell", "texture lattice spacing, px", scene.texture_cell),
      ROSE_KEY_INT("base_channels", "encoder width", model.extractor.base_channels),
      ROSE_KEY_INT("feature_channels", "matching feature channels", model.extractor.feature_channels),
      ROSE_KEY_BOOL("afem", "build the AFEM block", model.extractor.afem_enabled),
      ROSE_KEY_INT("hidden", "refinement head width", model.matcher.hidden),
      ROSE_KEY_INT("context", "context channels", model.matcher.context),
      ROSE_KEY_INT("radius", "lookup half-width in quarter-resolution bins", model.matcher.radius),
      ROSE_KEY_INT("d_max_quarter", "correlation bins at 1/4 resolution, 0 = from d_max",
                   model.matcher.d_max_quarter),
      KeyDef{{"supervision", "stage-0 objective: supervised | photometric"},
             [](StageConfig& c, const std::string& v) {
               if (v == "supervised") c.supervision = Supervision::supervised;
               else if (v == "photometric") c.supervision = Supervision::photometric;
               else bad_value("supervision", v, "supervised or photometric");
             },
             [](const StageConfig& c) {
               return std::string(c.supervision == Supervision::supervised ? "supervised" : "photometric");
             }},
      KeyDef{{"conditions", "step1 degraded conditions"},
             [](StageConfig& c, const std::string& v) { c.conditions = to_conditions("conditions", v); },
             [](const StageConfig& c) { return conds(c.conditions); }},
      KeyDef{{"mix_conditions", "step2 student input mix"},
             [](StageConfig& c, const std::string& v) { c.mix_conditions = to_conditions("mix_conditions", v); },
             [](const StageConfig& c) { return conds(c.mix_conditions); }},
      ROSE_KEY_NUM("fog_scattering", "fog scattering coefficient", degradation.scattering),
      ROSE_KEY_NUM("fog_airlight", "fog airlight", degradation.airlight),
      ROSE_KEY_NUM("focal_baseline", "focal length times baseline for depth", degradation.focal_baseline),
      ROSE_KEY_NUM("night_gamma", "night gamma", degradation.gamma),
      ROSE_KEY_NUM("night_gain", "night gain", degradation.gain),
      ROSE_KEY_NUM("night_noise", "night noise sigma", degradation.noise_sigma),
      ROSE_KEY_INT("rain_streaks", "rain streak count", degradation.streaks),
      ROSE_KEY_NUM("rain_length", "rain streak length, px", degradation.streak_length),
      ROSE_KEY_NUM("rain_angle", "rain streak angle, degrees", degradation.streak_angle_deg),
      ROSE_KEY_NUM("rain_brightness", "rain streak brightness", degradation.streak_brightness),
      ROSE_KEY_NUM("rain_alpha", "rain streak opacity", degradation.streak_alpha),
      ROSE_KEY_INT("rain_blur", "rain blur radius", degradation.blur_radius),
      ROSE_KEY_BOOL("augment", "asymmetric patch augmentation", augment),
      ROSE_KEY_INT("augment_patches", "max patches per sample", augment_cfg.max_patches),
      ROSE_KEY_NUM("augment_frac", "max patch side as image fraction", augment_cfg.max_frac),
      ROSE_KEY_NUM("collapse_threshold", "collapse guard: min std of D_K, px", collapse_threshold),
      ROSE_KEY_INT("collapse_every", "collapse guard period in steps, 0 = off", collapse_every),
      ROSE_KEY_INT("epoch_iters", "steps per L_fc track epoch", epoch_iters),
      ROSE_KEY_STR("init", "initial checkpoint (step1, step2 student)", init),
      ROSE_KEY_STR("teacher", "teacher checkpoint (step2)", teacher),
      ROSE_KEY_BOOL("from_scratch", "step2: fresh student instead of the step1 weights", from_scratch),
      KeyDef{{"eval_conditions", "conditions in the metrics report"},
             [](StageConfig& c, const std::string& v) { c.eval_conditions = to_conditions("eval_conditions", v); },
             [](const StageConfig& c) { return conds(c.eval_conditions); }},
      ROSE_KEY_INT("val_scenes", "validation scenes per condition, 0 = skip", val_scenes),
      ROSE_KEY_INT("val_seed", "validation set seed", val_seed),
      KeyDef{{"eval_mask", "all | noc | occ"},
             [](StageConfig& c, const std::string& v) {
               if (v == "all") c.eval_mask = MaskPolicy::all;
               else if (v == "noc") c.eval_mask = MaskPolicy::noc;
               else if (v == "occ") c.eval_mask = MaskPolicy::occ;
               else bad_value("eval_mask", v, "all, noc or occ");
             },
             [](const StageConfig& c) { return to_string(c.eval_mask); }},
      KeyDef{{"eval_variant", "clear | adverse extractor at evaluation"},
             [](StageConfig& c, const std::string& v) {
               if (v == "clear") c.eval_variant = model::Variant::clear;
               else if (v == "adverse") c.eval_variant = model::Variant::adverse;
               else bad_value("eval_variant", v, "clear or adverse");
             },
             [](const StageConfig& c) {
               return std::string(c.eval_variant == model::Variant::clear ? "clear" : "adverse");
             }},
      ROSE_KEY_INT("eval_batch", "scenes per evaluation forward pass", eval_batch),
      ROSE_KEY_STR("weights", "checkpoint to evaluate (eval)", weights_path),
  };
  return table;
}

#undef ROSE_KEY_NUM
#undef ROSE_KEY_INT
#undef ROSE_KEY_BOOL
#undef ROSE_KEY_STR

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::pretrain: return "pretrain";
    case Stage::step1: return "step1";
    case Stage::step2: return "step2";
    case Stage::eval: return "eval";
  }
  return "?";
}

std::string to_string(MaskPolicy p) {
  switch (p) {
    case MaskPolicy::all: return "all";
    case MaskPolicy::noc: return "noc";
    case MaskPolicy::occ: return "occ";
  }
  return "?";
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& d : key_table()) k.push_back(d.info);
    return k;
  }();
  return keys;
}

void set_key(StageConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& d : key_table())
    if (d.info.name == key) {
      d.set(cfg, value);
      return;
    }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

StageConfig parse_config(const std::string& text, StageConfig base) {
  std::stringstream ss(text);
  std::string line;
  std::set<std::string> seen;
  for (std::size_t no = 1; std::getline(ss, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(no) + ": ";
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(where + "empty key");
    if (!seen.insert(key).second) throw std::invalid_argument(where + "duplicate key '" + key + "'");
    try {
      set_key(base, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return base;
}

StageConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string config_text(const StageConfig& cfg) {
  std::string out;
  for (const auto& d : key_table()) out += d.info.name + " = " + d.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const StageConfig& cfg) {
  const std::string t = config_text(cfg);
  return sim::fnv1a(t.data(), t.size());
}

model::ModelConfig effective_model(const StageConfig& cfg) {
  model::ModelConfig m = cfg.model;
  if (m.matcher.d_max_quarter == 0)
    m.matcher.d_max_quarter = static_cast<std::size_t>(std::ceil(cfg.scene.d_max / 4.0)) + 1;
  return m;
}

void StageConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (batch < 1) bad("batch must be >= 1");
  if ((stage == Stage::step1 || stage == Stage::step2) && batch < 2)
    bad("batch must be >= 2 for step1/step2 (AFEM batch normalization)");
  if (!(lr > 0)) bad("lr must be > 0");
  if (warmup_frac < 0 || warmup_frac >= 1) bad("warmup_frac must be in [0, 1)");
  if (weight_decay < 0) bad("weight_decay must be >= 0");
  if (grad_clip < 0) bad("grad_clip must be >= 0");
  if (collapse_threshold < 0) bad("collapse_threshold must be >= 0");
  if (epoch_iters < 1) bad("epoch_iters must be >= 1");
  if (weights.n_iters != model.matcher.iterations) bad("K mismatch between losses and matcher");
  weights.validate();
  scene.validate();
  const auto m = effective_model(*this);
  m.validate();
  if (scene.height % 16 || scene.width % 16) bad("height and width must be multiples of 16");
  if (m.matcher.d_max_quarter >= scene.width / 4) bad("d_max_quarter must be < width / 4");
  degradation.validate();
  if (conditions.empty() || mix_conditions.empty() || eval_conditions.empty()) bad("condition lists must not be empty");
  if (stage == Stage::step1)
    for (auto c : conditions)
      if (c == sim::Condition::clear) bad("step1 conditions must be degraded (fog, rain, night)");
  if (eval_batch < 2 && eval_variant == model::Variant::adverse)
    bad("eval_batch must be >= 2 for the adverse variant");
  if (augment_cfg.max_patches < 1 || !(augment_cfg.max_frac > 0 && augment_cfg.max_frac <= 0.3))
    bad("augment_patches >= 1 and augment_frac in (0, 0.3] required");
}

}  // namespace rose::pipeline
