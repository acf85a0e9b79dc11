// rose: command-line driver for scene generation, training stages,
// the SGM baseline, evaluation and the gradient suite.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rose/gradient_suite.hpp"
#include "rose/pipeline.hpp"
#include "rose/rng.hpp"

namespace fs = std::filesystem;
using namespace rose;
using pipeline::StageConfig;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool force = false;
  int threads = 0;
  bool verbose = false;
  std::vector<std::string> overrides;  // key=value
};

std::string keys_footer() {
  std::string s = "Config keys (key = value, '#' comments):\n";
  for (const auto& k : pipeline::config_keys()) {
    std::string name = "  " + k.name;
    if (name.size() < 22) name.resize(22, ' ');
    s += name + " " + k.help + "\n";
  }
  return s;
}

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--config", c.config, "StageConfig file")->check(CLI::ExistingFile);
  auto* out = sub->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  sub->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& v) { c.seed = v, c.seed_set = true; }, "seed override");
  sub->add_flag("--force", c.force, "overwrite an existing manifest");
  sub->add_option("--threads", c.threads, "worker threads (default: ROSE_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  sub->add_flag("-v,--verbose", c.verbose, "progress on stderr");
  sub->add_option("--set", c.overrides, "override a config key (key=value), repeatable");
  sub->footer(keys_footer());
}

void apply_threads(const Common& c) {
  int n = c.threads;
  if (n == 0) {
    if (const char* env = std::getenv("ROSE_THREADS")) {
      try {
        n = std::stoi(env);
      } catch (const std::exception&) {
        throw std::invalid_argument(std::string("ROSE_THREADS is not a number: ") + env);
      }
      if (n < 1) throw std::invalid_argument("ROSE_THREADS must be >= 1");
    }
  }
  if (n > 0) ad::set_num_threads(n);
}

StageConfig build_config(const Common& c, pipeline::Stage stage) {
  StageConfig cfg = c.config.empty() ? StageConfig{} : pipeline::load_config(c.config);
  cfg.stage = stage;
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    pipeline::set_key(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (c.seed_set) cfg.seed = c.seed;
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

void print_row(const pipeline::LossRow& r, std::size_t total) {
  std::fprintf(stderr, "[%zu/%zu] lr %.3g loss %.5f", r.iteration + 1, total, r.lr, r.total);
  for (const auto& [k, v] : r.terms) std::fprintf(stderr, " %s %.5f", k.c_str(), v);
  std::fprintf(stderr, "\n");
}

int run_training(const Common& c, pipeline::Stage stage) {
  const StageConfig cfg = build_config(c, stage);
  std::function<void(const pipeline::LossRow&)> progress;
  if (c.verbose) {
    const std::size_t every = std::max<std::size_t>(1, cfg.iterations / 20);
    progress = [every, n = cfg.iterations](const pipeline::LossRow& r) {
      if (r.iteration % every == 0 || r.iteration + 1 == n) print_row(r, n);
    };
  }
  pipeline::run_stage(cfg, c.out, c.force, progress);
  if (c.verbose && fs::exists(fs::path(c.out) / "metrics.csv")) {
    std::ifstream f(fs::path(c.out) / "metrics.csv");
    std::cerr << f.rdbuf();
  }
  return 0;
}

int run_generate(const Common& c) {
  const StageConfig cfg = build_config(c, pipeline::Stage::eval);
  if (pipeline::has_manifest(c.out) && !c.force)
    throw std::runtime_error("refusing to overwrite " + (fs::path(c.out) / "manifest.txt").string() +
                             " (pass --force)");
  std::size_t written = 0;
  for (std::size_t i = 0; i < cfg.val_scenes; ++i) {
    const auto clear = pipeline::validation_scene(cfg, i);
    for (const auto cond : cfg.eval_conditions) {
      // Same degradation seeds as the evaluation harness.
      const auto s = cond == sim::Condition::clear
                         ? clear
                         : pipeline::degraded(clear, cfg, cond,
                                              mix_seed(mix_seed(cfg.val_seed, 0xE7A, i),
                                                       static_cast<std::uint64_t>(cond)));
      const auto dir = sim::save_sample(c.out, s);
      ++written;
      if (c.verbose) std::cerr << dir.string() << "\n";
    }
  }
  write_file(fs::path(c.out) / "config.txt", pipeline::config_text(cfg));
  pipeline::write_manifest(c.out, cfg, {{"samples", std::to_string(written)}}, true);
  return 0;
}

int run_sgm(const Common& c, sgm::SgmConfig s, const std::string& cost) {
  const StageConfig cfg = build_config(c, pipeline::Stage::eval);
  cfg.validate();
  if (pipeline::has_manifest(c.out) && !c.force)
    throw std::runtime_error("refusing to overwrite " + (fs::path(c.out) / "manifest.txt").string() +
                             " (pass --force)");
  s.kind = sgm::parse_cost_kind(cost);
  if (s.d_max == 0) s.d_max = static_cast<std::size_t>(std::ceil(cfg.scene.d_max));
  s.validate();
  const auto report = pipeline::evaluate(pipeline::sgm_predictor(s), cfg);
  fs::create_directories(c.out);
  write_file(fs::path(c.out) / "metrics.csv", report.csv());
  write_file(fs::path(c.out) / "config.txt", pipeline::config_text(cfg));
  char p1[32], p2[32];
  std::snprintf(p1, sizeof p1, "%.17g", s.p1);
  std::snprintf(p2, sizeof p2, "%.17g", s.p2);
  pipeline::write_manifest(c.out, cfg,
                           {{"sgm_cost", sgm::to_string(s.kind)},
                            {"sgm_d_max", std::to_string(s.d_max)},
                            {"sgm_p1", p1},
                            {"sgm_p2", p2},
                            {"sgm_paths", std::to_string(s.paths)}},
                           true);
  if (c.verbose) std::cerr << report.csv();
  return 0;
}

int run_gradcheck(const std::string& group, std::size_t seeds, bool verbose) {
  std::vector<verify::GradCase> cases;
  for (auto& gc : verify::all_cases())
    if (group.empty() || gc.group == group) cases.push_back(std::move(gc));
  if (cases.empty()) throw std::invalid_argument("no gradient cases in group '" + group + "'");
  std::printf("%-10s %-34s %6s %12s  %s\n", "group", "case", "seeds", "max_rel", "status");
  bool ok = true;
  for (const auto& gc : cases) {
    const auto r = verify::run_cases({gc}, seeds).front();
    const bool pass = r.worst < verify::kGradTolerance;
    ok = ok && pass;
    std::printf("%-10s %-34s %6zu %12.3e  %s\n", r.group.c_str(), r.name.c_str(), r.seeds, r.worst,
                pass ? "ok" : "FAIL");
    if (verbose) std::fflush(stdout);
  }
  std::printf("%s: %zu cases, tolerance %.0e\n", ok ? "all passed" : "FAILED", cases.size(),
              verify::kGradTolerance);
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rose: robust self-supervised stereo on generated scenes"};
  app.require_subcommand(1);
  app.footer(keys_footer());

  Common c;
  auto* gen = app.add_subcommand("generate", "write validation scenes per condition to --out");
  add_common(gen, c);
  auto* pre = app.add_subcommand("pretrain", "stage 0: clear-scene pretraining");
  add_common(pre, c);
  auto* s1 = app.add_subcommand("step1", "scene-correspondence learning");
  add_common(s1, c);
  std::string init, teacher, weights;
  s1->add_option("--init", init, "stage-0 checkpoint (overrides the init key)");
  auto* s2 = app.add_subcommand("step2", "adverse-weather distillation");
  add_common(s2, c);
  s2->add_option("--teacher", teacher, "step-1 checkpoint (overrides the teacher key)");
  s2->add_option("--init", init, "student initialization (default: the teacher)");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the validation scenes");
  add_common(ev, c);
  ev->add_option("--weights", weights, "checkpoint (overrides the weights key)");

  auto* sg = app.add_subcommand("sgm", "evaluate the SGM baseline on the validation scenes");
  add_common(sg, c);
  sgm::SgmConfig sgm_cfg;
  sgm_cfg.d_max = 0;
  std::string cost = "census";
  sg->add_option("--cost", cost, "matching cost: sad or census")->check(CLI::IsMember({"sad", "census"}));
  sg->add_option("--p1", sgm_cfg.p1, "small jump penalty");
  sg->add_option("--p2", sgm_cfg.p2, "large jump penalty");
  sg->add_option("--paths", sgm_cfg.paths, "4 or 8")->check(CLI::IsMember({4, 8}));
  sg->add_option("--disparities", sgm_cfg.d_max, "number of disparity hypotheses (default ceil(d_max))");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every primitive, loss and model case");
  std::size_t seeds = 5;
  std::string group;
  int gc_threads = 0;
  bool gc_verbose = false;
  gc->add_option("--seeds", seeds, "seeds per case")->check(CLI::PositiveNumber);
  gc->add_option("--group", group, "only this group (primitive, loss, model)");
  gc->add_option("--threads", gc_threads, "worker threads")->check(CLI::PositiveNumber);
  gc->add_flag("-v,--verbose", gc_verbose, "flush each row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gc->parsed()) {
      c.threads = gc_threads;
      apply_threads(c);
      return run_gradcheck(group, seeds, gc_verbose);
    }
    apply_threads(c);
    if (!init.empty()) c.overrides.push_back("init=" + init);
    if (!teacher.empty()) c.overrides.push_back("teacher=" + teacher);
    if (!weights.empty()) c.overrides.push_back("weights=" + weights);
    if (gen->parsed()) return run_generate(c);
    if (pre->parsed()) return run_training(c, pipeline::Stage::pretrain);
    if (s1->parsed()) return run_training(c, pipeline::Stage::step1);
    if (s2->parsed()) return run_training(c, pipeline::Stage::step2);
    if (ev->parsed()) return run_training(c, pipeline::Stage::eval);
    if (sg->parsed()) return run_sgm(c, sgm_cfg, cost);
  } catch (const std::exception& e) {
    std::cerr << "rose: error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
