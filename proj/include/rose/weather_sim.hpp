#pragma once

// Procedural layered stereo scenes with exact ground truth, and analytic
// weather degradations that leave the geometry untouched.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rose::sim {

enum class Condition { clear, fog, rain, night };

std::string_view to_string(Condition c);
/// Throws std::invalid_argument on unknown names.
Condition parse_condition(std::string_view name);

/// Planar C x H x W image stored row-major per channel.
struct Image {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : c(channels), h(height), w(width), data(channels * height * width, fill) {}

  double& at(std::size_t ch, std::size_t y, std::size_t x) { return data[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const {
    return data[(ch * h + y) * w + x];
  }
  bool operator==(const Image&) const = default;
};

/// Binary H x W mask, 1 = set.
struct Mask {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(std::size_t height, std::size_t width) : h(height), w(width), data(height * width, 0) {}
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

struct StereoSample {
  Image left, right;              // C x H x W in [0, 1]
  Image disp_left, disp_right;    // 1 x H x W, pixels
  Mask occ_left, occ_right;       // 1 where the pixel has no match in the other view
  Condition condition = Condition::clear;
  std::uint64_t seed = 0;
};

struct SceneConfig {
  std::size_t channels = 3;
  std::size_t height = 64;
  std::size_t width = 128;
  double d_max = 16.0;            // exclusive bound on disparity
  std::size_t n_layers = 3;       // planes including the background
  double texture_cell = 4.0;      // coarse noise lattice spacing, pixels
  bool integer_disparity = true;
  /// Fixes the background disparity; drawn per scene when unset.
  std::optional<double> background_disparity;

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
};

/// Fronto-parallel textured plane. Rows [y0, y1) and left-view columns
/// [x0, x1); the background plane covers the whole frame.
struct Layer {
  double x0 = 0, x1 = 0;
  std::size_t y0 = 0, y1 = 0;
  double disparity = 0;
  std::uint64_t texture_seed = 0;
  std::array<double, 3> base{0.5, 0.5, 0.5};
};

/// Renders both views, both disparity maps and both occlusion masks from an
/// explicit layer list. Nearer layers (larger disparity) hide farther ones.
StereoSample render_layers(const SceneConfig& cfg, const Layer& background,
                           const std::vector<Layer>& layers, std::uint64_t seed);

/// Random layered scene. Throws std::runtime_error when no valid set of
/// layer disparities is found within the retry budget.
StereoSample generate_scene(std::uint64_t seed, const SceneConfig& cfg);

/// The layers generate_scene would render for (seed, cfg).
std::vector<Layer> draw_layers(std::uint64_t seed, const SceneConfig& cfg, Layer& background);

// ---------------------------------------------------------------------------
// Degradations. Geometry fields are copied through unchanged.

struct DegradationSpec {
  Condition kind = Condition::fog;
  // fog
  double scattering = 0.06;
  double airlight = 0.8;
  double focal_baseline = 64.0;
  // night
  double gamma = 2.2;
  double gain = 0.5;
  double noise_sigma = 0.03;
  // rain
  std::size_t streaks = 40;
  double streak_length = 8.0;
  double streak_angle_deg = 15.0;
  double streak_brightness = 0.9;
  double streak_alpha = 0.6;
  std::size_t blur_radius = 1;

  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kFogDisparityFloor = 0.5;

StereoSample apply_fog(const StereoSample& s, const DegradationSpec& spec);
StereoSample apply_night(const StereoSample& s, const DegradationSpec& spec);
StereoSample apply_rain(const StereoSample& s, const DegradationSpec& spec);
/// Dispatches on spec.kind; clear returns a copy.
StereoSample degrade(const StereoSample& s, const DegradationSpec& spec);

/// Streak coverage of one view (0 = left, 1 = right).
Mask rain_streak_mask(const DegradationSpec& spec, std::size_t h, std::size_t w, int view);
/// Mean over the (2r+1)^2 window with edge replication.
Image box_blur(const Image& img, std::size_t radius);

struct AugmentConfig {
  std::size_t max_patches = 2;
  double max_frac = 0.25;  // patch side as a fraction of the image side
};

struct Patch {
  int view = 0;  // 0 = left, 1 = right
  std::size_t x = 0, y = 0, w = 0, h = 0;
};

struct AugmentResult {
  StereoSample sample;
  std::vector<Patch> patches;
};

/// Pastes mean-colour rectangles onto one randomly chosen view.
AugmentResult asymmetric_augment(const StereoSample& s, std::uint64_t seed,
                                 const AugmentConfig& cfg);
/// Replaces the rectangle by its own per-channel mean.
void paste_mean_patch(Image& img, const Patch& p);

// ---------------------------------------------------------------------------
// File formats.

void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);
/// Single-channel images use "Pf", three-channel "PF"; little-endian,
/// rows stored bottom-up.
void write_pfm(const std::filesystem::path& path, const Image& img);
Image read_pfm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Mask& m);
Mask read_pgm(const std::filesystem::path& path);

/// Writes <root>/<condition>/<seed>/{left.ppm, right.ppm, disp_left.pfm,
/// disp_right.pfm, occ_left.pgm, occ_right.pgm, meta.txt}.
std::filesystem::path save_sample(const std::filesystem::path& root, const StereoSample& s);
StereoSample load_sample(const std::filesystem::path& dir);

/// FNV-1a 64 over raw bytes; used for golden checks.
std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_mask(const Mask& m);
std::uint64_t hash_image(const Image& img);

}  // namespace rose::sim
