#include <algorithm>

#include "case_util.hpp"
#include "rose/gradient_suite.hpp"
#include "rose/model.hpp"

namespace rose::verify {

using ad::Shape;
using ad::Tensor;

namespace {

// Small network with every parameter drawn at random, zero-initialised heads
// included, so no path is trivially dead.
model::WeightStore random_store(const model::ModelConfig& cfg, Rng& rng, bool with_prior) {
  model::WeightStore ws = model::init_weights(cfg, rng.next_u64());
  if (with_prior) model::attach_prior(ws);
  model::WeightStore out;
  for (const auto& name : ws.names()) {
    const Tensor& t = ws.get(name);
    std::vector<double> v(t.data().begin(), t.data().end());
    for (auto& x : v) x += 0.3 * rng.normal();
    out.add(name, Tensor::from(t.shape(), std::move(v)), ws.frozen(name));
  }
  return out;
}

// Checks fn over `fixed` inputs plus every parameter whose name matches one
// of the prefixes.
double check_store(model::WeightStore ws, const std::vector<Tensor>& fixed,
                   const std::vector<std::string>& prefixes,
                   const std::function<Tensor(const model::WeightStore&, const std::vector<Tensor>&)>& fn,
                   std::uint64_t seed) {
  std::vector<std::string> names;
  for (const auto& n : ws.names())
    for (const auto& p : prefixes)
      if (n.rfind(p, 0) == 0 && !ws.frozen(n)) {
        names.push_back(n);
        break;
      }
  std::vector<Tensor> inputs = fixed;
  for (const auto& n : names) inputs.push_back(ws.get(n).detach());
  const std::size_t k = fixed.size();
  return check_inputs(inputs, [&](const std::vector<Tensor>& in) {
    model::WeightStore bound = ws;
    for (std::size_t i = 0; i < names.size(); ++i) bound.bind(names[i], in[k + i]);
    return fn(bound, std::vector<Tensor>(in.begin(), in.begin() + static_cast<long>(k)));
  }, seed);
}

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.extractor.base_channels = 2;
  cfg.extractor.feature_channels = 4;
  cfg.extractor.feature_gain = 1.0;
  cfg.matcher.d_max_quarter = 3;
  cfg.matcher.iterations = 2;
  cfg.matcher.hidden = 3;
  cfg.matcher.context = 2;
  cfg.matcher.radius = 1;
  return cfg;
}

}  // namespace

std::vector<GradCase> model_cases() {
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::function<double(std::uint64_t)> run) {
    cases.push_back({"model", std::move(name), std::move(run)});
  };

  add_case("fourier_suppress", [](std::uint64_t seed) {
    Rng rng(seed);
    model::ModelConfig cfg;
    cfg.extractor.base_channels = 4;
    const auto ws = random_store(cfg, rng, false);
    return check_store(ws, {random_tensor({2, 4, 6, 6}, rng)}, {"afem.amp"},
                       [](const auto& w, const auto& in) { return model::fourier_suppress(w, in[0]); },
                       seed);
  });

  add_case("afem", [](std::uint64_t seed) {
    Rng rng(seed);
    model::ModelConfig cfg;
    cfg.extractor.base_channels = 4;
    const auto ws = random_store(cfg, rng, false);
    return check_store(ws, {random_tensor({2, 4, 6, 6}, rng)}, {"afem."},
                       [](const auto& w, const auto& in) { return model::afem_forward(w, in[0]); },
                       seed);
  });

  add_case("cost_volume_soft_argmin", [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor fl = random_tensor({2, 3, 3, 7}, rng), fr = random_tensor({2, 3, 3, 7}, rng);
    return check_inputs({fl, fr}, [](const auto& in) {
      return model::soft_argmin(model::cost_volume(in[0], in[1], 4));
    }, seed);
  });

  auto full_model = [&](std::string name, model::Variant v) {
    add_case(std::move(name), [v](std::uint64_t seed) {
      Rng rng(seed);
      const auto cfg = tiny_config();
      const auto ws = random_store(cfg, rng, true);
      Tensor l = random_tensor({2, 3, 16, 32}, rng, 0, 1), r = random_tensor({2, 3, 16, 32}, rng, 0, 1);
      return check_store(ws, {l, r}, {"enc.", "dec.", "match.", "afem."},
                         [&cfg, v](const auto& w, const auto& in) {
                           auto p = model::forward_pair(w, cfg, in[0], in[1], v,
                                                        model::PriorMode::frozen);
                           std::vector<Tensor> parts;
                           for (const auto& d : p.seq) parts.push_back(d);
                           return ad::concat(parts, 1);
                         },
                         seed);
    });
  };
  full_model("full_model_clear", model::Variant::clear);
  full_model("full_model_adverse", model::Variant::adverse);
  return cases;
}

}  // namespace rose::verify
