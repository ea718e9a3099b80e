#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "daformer/core/tensor.hpp"

namespace daformer {

enum class Domain { source, target };

/// One image with its dense label map. The image is (h*w) x 3 in [0,1].
struct SegSample {
  MatF image;
  std::vector<std::uint8_t> label;
  int h = 0;
  int w = 0;
  Domain domain = Domain::source;
  std::uint32_t id = 0;

  std::size_t num_pixels() const { return static_cast<std::size_t>(h) * w; }
};

enum class ClassKind { stuff, thing };

enum class ShapeFamily { band_top, band_middle, band_bottom, disk, square, triangle, star, cross, diamond };

std::string to_string(ClassKind k);
std::string to_string(ShapeFamily s);
ClassKind class_kind_from_string(const std::string& s);
ShapeFamily shape_family_from_string(const std::string& s);

struct ClassDef {
  int id = 0;
  std::string name;
  ClassKind kind = ClassKind::thing;
  ShapeFamily shape = ShapeFamily::disk;
  /// Probability that a scene contains this class.
  double rate = 1.0;
  /// Base RGB color before the domain style is applied.
  std::array<float, 3> color{0.5f, 0.5f, 0.5f};
};

/// Photometric rendering style of one domain.
struct DomainStyle {
  double hue_rotation_deg = 0.0;
  double saturation = 1.0;
  double texture_amplitude = 0.0;
  int blur_radius = 0;
  double noise_sigma = 0.02;
  /// Per-instance uniform color offset range.
  double color_variation = 0.06;

  bool operator==(const DomainStyle&) const = default;
};

struct DatasetSpec {
  std::vector<ClassDef> classes;
  int height = 64;
  int width = 64;
  int num_source = 800;
  int num_target = 800;
  int num_target_val = 200;
  DomainStyle source_style;
  DomainStyle target_style;
  double thing_radius_min = 8.0;
  double thing_radius_max = 18.0;
  std::uint64_t seed = 0;

  int num_classes() const { return static_cast<int>(classes.size()); }
  std::vector<int> thing_classes() const;

  /// Throws ConfigError on rates outside (0,1], fewer than 2 stuff or 3 thing
  /// classes, identical domain styles, or non-positive sizes.
  void validate() const;

  /// Default long-tail benchmark: 3 stuff bands and 5 thing shapes of which
  /// star and cross are rare.
  static DatasetSpec shapeworld_default();
};

struct AugmentationParams {
  double jitter_strength = 0.2;
  double blur_probability = 0.5;
  double blur_sigma_min = 0.15;
  double blur_sigma_max = 1.15;
  int crop_h = 64;
  int crop_w = 64;

  void validate() const;
};

/// Throws ConfigError when the crop does not fit the generated images.
void validate(const DatasetSpec& spec, const AugmentationParams& aug);

enum class Split { source_train, target_train, target_val };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Renders `count` samples of one split. Sample i depends only on
/// (spec.seed, split, i).
std::vector<SegSample> generate_split(const DatasetSpec& spec, Split split);

struct GeneratedDataset {
  std::vector<SegSample> source;
  std::vector<SegSample> target;
  std::vector<SegSample> target_val;
};

GeneratedDataset generate_dataset(const DatasetSpec& spec);

/// Single-sample renderer used by generate_split.
SegSample render_sample(const DatasetSpec& spec, Split split, std::uint32_t index);

/// Sets every label pixel whose center lies inside the shape to `value`.
/// `radius` is the circumradius in pixels, `angle` a rotation in radians.
void rasterize_shape(ShapeFamily shape, double cx, double cy, double radius, double angle, std::uint8_t value,
                     int h, int w, std::vector<std::uint8_t>& label);

/// Same scene rendered in both domain styles (labels identical).
std::pair<SegSample, SegSample> render_scene_pair(const DatasetSpec& spec, std::uint32_t index);

// ---------------------------------------------------------------------------
// Augmentation

/// Crops the same (h, w) window from image and label. The window origin is
/// drawn as y0 ~ U{0..H-h} followed by x0 ~ U{0..W-w}.
SegSample random_crop(const SegSample& sample, int h, int w, std::mt19937_64& rng);

/// Photometric augmentation; labels are never touched.
///
/// Draw order: if jitter_strength > 0, per channel c = 0,1,2 a scale
/// a ~ U[1-s, 1+s] then an offset b ~ U[-s, s], applied as a*x + b. Then, if
/// blur_probability > 0, u ~ U[0,1); when u < p a sigma ~ U[min, max] is drawn
/// and a separable Gaussian blur (radius ceil(2 sigma), edge replicate) is
/// applied. The result is clamped to [0,1].
SegSample augment(const SegSample& sample, const AugmentationParams& params, std::mt19937_64& rng);

/// Separable Gaussian blur with edge replication; exposed for tests.
MatF gaussian_blur(const MatF& image, int h, int w, double sigma);

// ---------------------------------------------------------------------------
// Disk cache

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

/// Writes <root>/<split>/<id>.img (raw float32, h*w*3) and <id>.lab (raw
/// uint8, h*w) for every split plus <root>/manifest.json.
void save_dataset(const std::filesystem::path& root, const DatasetSpec& spec,
                  const GeneratedDataset& data);

struct LoadedDataset {
  DatasetSpec spec;
  GeneratedDataset data;
};

LoadedDataset load_dataset(const std::filesystem::path& root);

/// Loads a cached dataset when its manifest matches `spec`, otherwise
/// generates and caches it.
GeneratedDataset load_or_generate(const std::filesystem::path& root, const DatasetSpec& spec);

}  // namespace daformer
