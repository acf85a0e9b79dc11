#include <cmath>
#include <stdexcept>
#include <string>

#include "rose/model.hpp"
#include "rose/rng.hpp"

namespace rose::model {

using namespace ad;

namespace {

void add_conv(WeightStore& ws, Rng& rng, const std::string& name, std::size_t cin,
              std::size_t cout, std::size_t k, bool zero = false, double gain = 1.0) {
  std::vector<double> w(cout * cin * k * k, 0.0);
  if (!zero) {
    const double sd = gain * std::sqrt(2.0 / static_cast<double>(cin * k * k));
    for (auto& v : w) v = sd * rng.normal();
  }
  ws.add(name + ".w", Tensor::from({cout, cin, k, k}, std::move(w)));
  ws.add(name + ".b", Tensor::zeros({cout}));
}

Tensor conv(const WeightStore& ws, const std::string& name, const Tensor& x, std::size_t stride = 1) {
  const Tensor& w = ws.get(name + ".w");
  return conv2d(x, w, ws.get(name + ".b"), stride, w.dim(2) / 2);
}

struct Taps {
  Tensor s1, s2, s3;  // 1/4, 1/8, 1/16
};

Taps encode(const WeightStore& ws, const std::string& p, const Tensor& x) {
  const Tensor stem = relu(conv(ws, p + ".stem", x, 2));
  Taps t;
  t.s1 = relu(conv(ws, p + ".s1", stem, 2));
  t.s2 = relu(conv(ws, p + ".s2", t.s1, 2));
  t.s3 = relu(conv(ws, p + ".s3", t.s2, 2));
  return t;
}

const char* kEncoderStages[] = {"stem", "s1", "s2", "s3"};

}  // namespace

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
  if (extractor.in_channels < 1 || extractor.base_channels < 1 || extractor.feature_channels < 1)
    bad("channel counts must be >= 1");
  if (!(extractor.feature_gain > 0)) bad("feature_gain must be > 0");
  if (matcher.d_max_quarter < 1) bad("d_max_quarter must be >= 1");
  if (matcher.iterations < 1) bad("iterations must be >= 1");
  if (matcher.hidden < 1 || matcher.context < 1) bad("hidden and context must be >= 1");
}

WeightStore init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t b = cfg.extractor.base_channels, cf = cfg.extractor.feature_channels;
  const auto& m = cfg.matcher;
  Rng rng(mix_seed(seed, 0x1417));
  WeightStore ws;
  add_conv(ws, rng, "enc.stem", cfg.extractor.in_channels, b, 3);
  add_conv(ws, rng, "enc.s1", b, b, 3);
  add_conv(ws, rng, "enc.s2", b, 2 * b, 3);
  add_conv(ws, rng, "enc.s3", 2 * b, 2 * b, 3);
  add_conv(ws, rng, "dec.d8", 4 * b, 2 * b, 3);
  add_conv(ws, rng, "dec.fuse", 8 * b, cf, 1);
  // He-scaled features give a nearly flat correlation volume after the
  // 1/sqrt(C) normalization; the soft-argmin then barely trains.
  add_conv(ws, rng, "dec.out", cf, cf, 3, false, cfg.extractor.feature_gain);

  const std::size_t squeeze = std::max<std::size_t>(1, 2 * b / 4);
  ws.add("afem.in.gamma", Tensor::full({b}, 1.0));
  ws.add("afem.in.beta", Tensor::zeros({b}));
  ws.add("afem.bn.gamma", Tensor::full({b}, 1.0));
  ws.add("afem.bn.beta", Tensor::zeros({b}));
  add_conv(ws, rng, "afem.se1", 2 * b, squeeze, 1);
  add_conv(ws, rng, "afem.se2", squeeze, 2 * b, 1);
  add_conv(ws, rng, "afem.fuse", 2 * b, b, 1, true);
  add_conv(ws, rng, "afem.amp1", b, b, 1);
  add_conv(ws, rng, "afem.amp2", b, b, 1, true);

  add_conv(ws, rng, "match.ctx", cf, m.context, 3);
  add_conv(ws, rng, "match.h1", 2 * m.radius + 2 + m.context, m.hidden, 3);
  add_conv(ws, rng, "match.h2", m.hidden, m.hidden, 3);
  add_conv(ws, rng, "match.out", m.hidden, 1, 3, true);
  return ws;
}

void attach_prior(WeightStore& ws) {
  for (const char* stage : kEncoderStages)
    for (const char* kind : {".w", ".b"}) {
      const std::string src = std::string("enc.") + stage + kind;
      const std::string dst = std::string("prior.") + stage + kind;
      if (ws.contains(dst)) throw std::logic_error("prior branch already attached");
      ws.add(dst, ws.get(src), true);
    }
}

Tensor fourier_suppress(const WeightStore& ws, const Tensor& f) {
  const Tensor spec = dft2(f);
  const Tensor amp = complex_abs(spec);
  const Tensor delta = conv(ws, "afem.amp2", relu(conv(ws, "afem.amp1", amp)));
  const Tensor amp_new = relu(add(amp, delta));
  // X + (A' - A) X / |X| equals A' X / |X| and stays well conditioned where
  // |X| is near zero and A' == A.
  return idft2(add(spec, polar_recombine(sub(amp_new, amp), spec)));
}

Tensor afem_forward(const WeightStore& ws, const Tensor& f) {
  if (f.rank() == 4 && f.dim(0) < 2)
    throw std::invalid_argument("afem_forward: batch normalization needs a batch of at least 2");
  const Tensor fin = instance_norm(f, ws.get("afem.in.gamma"), ws.get("afem.in.beta"));
  const Tensor fbn = batch_norm(f, ws.get("afem.bn.gamma"), ws.get("afem.bn.beta"));
  const Tensor merged = concat({fin, fbn}, 1);
  const Tensor gate =
      sigmoid(conv(ws, "afem.se2", relu(conv(ws, "afem.se1", global_avg_pool(merged)))));
  const Tensor fused = conv(ws, "afem.fuse", mul(merged, gate));
  return add(fourier_suppress(ws, fused), f);
}

Features extract_features(const WeightStore& ws, const ModelConfig& cfg, const Tensor& left,
                          const Tensor& right, Variant v, PriorMode mode) {
  if (left.shape() != right.shape())
    throw ShapeError("extract_features: view shapes differ " + shape_str(left.shape()) + " vs " +
                     shape_str(right.shape()));
  if (left.rank() != 4 || left.dim(1) != cfg.extractor.in_channels)
    throw ShapeError("extract_features: expected N x " + std::to_string(cfg.extractor.in_channels) +
                     " x H x W, got " + shape_str(left.shape()));
  if (left.dim(2) % 16 != 0 || left.dim(3) % 16 != 0)
    throw std::invalid_argument("extract_features: H and W must be multiples of 16, got " +
                                shape_str(left.shape()));
  if (v == Variant::adverse && !cfg.extractor.afem_enabled)
    throw std::invalid_argument("adverse variant requires afem_enabled");
  if (mode == PriorMode::frozen && !ws.contains("prior.stem.w"))
    throw std::runtime_error("prior encoder requires stage0 checkpoint");

  const std::size_t n = left.dim(0);
  const Tensor x = concat({left, right}, 0);
  const Taps enc = encode(ws, "enc", x);
  const Taps prior = mode == PriorMode::frozen ? encode(ws, "prior", x) : enc;
  const Tensor f4 = v == Variant::adverse ? afem_forward(ws, enc.s1) : enc.s1;

  const Tensor d8 = relu(conv(ws, "dec.d8", concat({upsample_bilinear(enc.s3, 2), enc.s2}, 1)));
  const Tensor merged = concat({upsample_bilinear(d8, 2), f4, prior.s1,
                                upsample_bilinear(prior.s2, 2), upsample_bilinear(prior.s3, 4)},
                               1);
  const Tensor feat = conv(ws, "dec.out", relu(conv(ws, "dec.fuse", merged)));
  return {slice(feat, 0, 0, n), slice(feat, 0, n, n)};
}

Tensor cost_volume(const Tensor& fl, const Tensor& fr, std::size_t d_max) {
  return correlation_volume(fl, fr, d_max, kVolumeSentinel);
}

Tensor soft_argmin(const Tensor& volume) {
  if (volume.rank() != 4) throw ShapeError("soft_argmin: expected N x D x H x W");
  const std::size_t d = volume.dim(1);
  std::vector<double> idx(d);
  for (std::size_t i = 0; i < d; ++i) idx[i] = static_cast<double>(i);
  return sum(mul(softmax(volume, 1), Tensor::from({1, d, 1, 1}, idx)), 1, true);
}

stereo::DisparitySequence matcher_forward(const WeightStore& ws, const ModelConfig& cfg,
                                          const Tensor& fl, const Tensor& fr) {
  const auto& m = cfg.matcher;
  const Tensor vol = cost_volume(fl, fr, m.d_max_quarter);
  const Tensor ctx = relu(conv(ws, "match.ctx", fl));
  Tensor disp = soft_argmin(vol);
  const double norm = 1.0 / static_cast<double>(m.d_max_quarter);
  stereo::DisparitySequence seq;
  for (std::size_t i = 0; i < m.iterations; ++i) {
    const Tensor look = lookup_disparity(vol, disp, m.radius, kVolumeSentinel);
    const Tensor in = concat({look, scale(disp, norm), ctx}, 1);
    const Tensor h = relu(conv(ws, "match.h2", relu(conv(ws, "match.h1", in))));
    disp = relu(add(disp, conv(ws, "match.out", h)));
    seq.push_back(scale(upsample_bilinear(disp, 4), 4.0));
  }
  return seq;
}

Prediction forward_pair(const WeightStore& ws, const ModelConfig& cfg, const Tensor& left,
                        const Tensor& right, Variant v, PriorMode mode) {
  Prediction p;
  p.features = extract_features(ws, cfg, left, right, v, mode);
  p.seq = matcher_forward(ws, cfg, p.features.left, p.features.right);
  return p;
}

Tensor flip_predict_right(const WeightStore& ws, const ModelConfig& cfg, const Tensor& left,
                          const Tensor& right, Variant v, PriorMode mode) {
  const auto p = forward_pair(ws, cfg, hflip(right), hflip(left), v, mode);
  return hflip(p.final());
}

std::vector<std::string> parameter_names(const WeightStore& ws, Variant v, PriorMode mode) {
  // Run a tiny forward pass and record which parameters were read.
  const std::size_t cin = ws.get("enc.stem.w").dim(1);
  const std::size_t hidden_in = ws.get("match.h1.w").dim(1);
  const std::size_t ctx = ws.get("match.ctx.w").dim(0);
  ModelConfig cfg;
  cfg.extractor.in_channels = cin;
  cfg.matcher.context = ctx;
  cfg.matcher.radius = (hidden_in - 2 - ctx) / 2;
  cfg.matcher.d_max_quarter = 2;
  cfg.matcher.iterations = 1;
  NoGradGuard guard;
  const Tensor img = Tensor::full({1, cin, 16, 32}, 0.5);
  ws.start_access_log();
  try {
    forward_pair(ws, cfg, img, img, v, mode);
  } catch (...) {
    ws.take_access_log();
    throw;
  }
  const auto used = ws.take_access_log();
  return {used.begin(), used.end()};
}

}  // namespace rose::model
