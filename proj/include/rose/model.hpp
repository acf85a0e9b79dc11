#pragma once

// Toy-scale stereo network: strided-conv encoder with a frozen prior copy,
// pyramid decoder at 1/4 resolution, optional AFEM on the adverse path, and
// a correlation matcher with iterative residual refinement.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "rose/stereo_ops.hpp"
#include "rose/tensor.hpp"

namespace rose::model {

using ad::Tensor;

// ---------------------------------------------------------------------------
// Parameters

class WeightStore {
 public:
  struct Entry {
    Tensor value;
    bool frozen = false;
  };

  /// Registers a parameter; trainable entries get requires_grad.
  void add(const std::string& name, Tensor value, bool frozen = false);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  /// Throws std::out_of_range naming the missing parameter.
  const Tensor& get(const std::string& name) const;
  /// Replaces the handle of an existing entry without copying, so the value
  /// can be the output of a graph. Used by the gradient harness.
  void bind(const std::string& name, const Tensor& value);
  bool frozen(const std::string& name) const;
  void freeze(const std::string& name);
  /// Freezes every entry whose name starts with prefix.
  void freeze_prefix(const std::string& prefix);
  bool all_frozen() const;

  std::vector<std::string> names() const;
  std::vector<std::pair<std::string, Tensor>> trainable() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  /// Deep copy: no tensor storage is shared with the source.
  WeightStore clone() const;
  void zero_grad();

  /// Checkpoint bytes: "ROSEW001", u64 entry count, then per entry u32 name
  /// length, name, u8 frozen, u32 rank, u64 dims, f32 values; all
  /// little-endian.
  std::string serialize() const;
  static WeightStore deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static WeightStore load(const std::filesystem::path& path);

  /// Records names read through get() until the log is taken.
  void start_access_log() const;
  std::set<std::string> take_access_log() const;

  bool operator==(const WeightStore& other) const;

 private:
  std::map<std::string, Entry> entries_;
  mutable std::shared_ptr<std::set<std::string>> access_log_;
};

// ---------------------------------------------------------------------------
// Configuration

struct ExtractorConfig {
  std::size_t in_channels = 3;
  std::size_t base_channels = 16;
  std::size_t feature_channels = 32;
  bool afem_enabled = true;
  double feature_gain = 10.0;  // init scale of dec.out relative to He
};

struct MatcherConfig {
  std::size_t d_max_quarter = 8;  // correlation bins at 1/4 resolution
  std::size_t iterations = 4;     // K
  std::size_t hidden = 32;
  std::size_t context = 16;
  std::size_t radius = 2;         // lookup half-width in bins
};

struct ModelConfig {
  ExtractorConfig extractor;
  MatcherConfig matcher;
  void validate() const;
};

enum class Variant { clear, adverse };

/// How the prior taps are produced. tied reuses the trainable encoder (used
/// before any prior exists); frozen reads the prior.* parameters.
enum class PriorMode { tied, frozen };

inline constexpr double kVolumeSentinel = -1e4;

/// Fresh weights for enc.*, dec.*, afem.*, match.*. The prior branch is added
/// later by attach_prior.
WeightStore init_weights(const ModelConfig& cfg, std::uint64_t seed);

/// Copies enc.* into prior.* and freezes the copies.
void attach_prior(WeightStore& ws);

/// Names each variant reads in the given prior mode.
std::vector<std::string> parameter_names(const WeightStore& ws, Variant v, PriorMode mode);

// ---------------------------------------------------------------------------
// Building blocks

/// Per-channel amplitude filtering in the frequency domain, phase kept.
Tensor fourier_suppress(const WeightStore& ws, const Tensor& f);
/// Parallel IN/BN, channel attention, fusion, Fourier suppression, residual.
Tensor afem_forward(const WeightStore& ws, const Tensor& f);

struct Features {
  Tensor left, right;  // N x C_f x H/4 x W/4
};

/// Shared extractor on both views.
Features extract_features(const WeightStore& ws, const ModelConfig& cfg, const Tensor& left,
                          const Tensor& right, Variant v, PriorMode mode);

/// <F_L, F_R shifted by d> / sqrt(C) with sentinel outside the right image.
Tensor cost_volume(const Tensor& fl, const Tensor& fr, std::size_t d_max);
/// sum_d d * softmax_d(volume).
Tensor soft_argmin(const Tensor& volume);

/// Full-resolution iterates D_1..D_K.
stereo::DisparitySequence matcher_forward(const WeightStore& ws, const ModelConfig& cfg,
                                          const Tensor& fl, const Tensor& fr);

struct Prediction {
  Features features;
  stereo::DisparitySequence seq;
  const Tensor& final() const { return seq.back(); }
};

/// Extractor + matcher. H and W must be multiples of 16.
Prediction forward_pair(const WeightStore& ws, const ModelConfig& cfg, const Tensor& left,
                        const Tensor& right, Variant v, PriorMode mode);

/// Right-view disparity: hflip(final(predict(hflip(R), hflip(L)))).
Tensor flip_predict_right(const WeightStore& ws, const ModelConfig& cfg, const Tensor& left,
                          const Tensor& right, Variant v, PriorMode mode);

}  // namespace rose::model
