#include "daformer/data/shapeworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "daformer/core/errors.hpp"
#include "daformer/core/random.hpp"

namespace daformer {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Enum names

std::string to_string(ClassKind k) { return k == ClassKind::stuff ? "stuff" : "thing"; }

ClassKind class_kind_from_string(const std::string& s) {
  if (s == "stuff") return ClassKind::stuff;
  if (s == "thing") return ClassKind::thing;
  throw ConfigError("unknown class kind: " + s);
}

namespace {

constexpr std::array<std::pair<ShapeFamily, const char*>, 9> kShapeNames{{
    {ShapeFamily::band_top, "band_top"},
    {ShapeFamily::band_middle, "band_middle"},
    {ShapeFamily::band_bottom, "band_bottom"},
    {ShapeFamily::disk, "disk"},
    {ShapeFamily::square, "square"},
    {ShapeFamily::triangle, "triangle"},
    {ShapeFamily::star, "star"},
    {ShapeFamily::cross, "cross"},
    {ShapeFamily::diamond, "diamond"},
}};

bool is_band(ShapeFamily s) {
  return s == ShapeFamily::band_top || s == ShapeFamily::band_middle || s == ShapeFamily::band_bottom;
}

}  // namespace

std::string to_string(ShapeFamily s) {
  for (const auto& [f, n] : kShapeNames)
    if (f == s) return n;
  return "disk";
}

ShapeFamily shape_family_from_string(const std::string& s) {
  for (const auto& [f, n] : kShapeNames)
    if (s == n) return f;
  throw ConfigError("unknown shape family: " + s);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::source_train: return "source_train";
    case Split::target_train: return "target_train";
    case Split::target_val: return "target_val";
  }
  return "source_train";
}

Split split_from_string(const std::string& s) {
  if (s == "source_train" || s == "source") return Split::source_train;
  if (s == "target_train" || s == "target") return Split::target_train;
  if (s == "target_val" || s == "val") return Split::target_val;
  throw ConfigError("unknown split: " + s);
}

// ---------------------------------------------------------------------------
// Spec

std::vector<int> DatasetSpec::thing_classes() const {
  std::vector<int> out;
  for (const auto& c : classes)
    if (c.kind == ClassKind::thing) out.push_back(c.id);
  return out;
}

void DatasetSpec::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("dataset: image size must be positive");
  if (num_source <= 0 || num_target <= 0 || num_target_val < 0)
    throw ConfigError("dataset: split sizes must be positive");
  if (classes.size() > 254) throw ConfigError("dataset: too many classes");
  int stuff = 0, things = 0;
  std::array<int, 3> bands{0, 0, 0};
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const ClassDef& c = classes[i];
    if (c.id != static_cast<int>(i)) throw ConfigError("dataset: class ids must be 0..C-1 in order");
    if (!(c.rate > 0.0 && c.rate <= 1.0))
      throw ConfigError("dataset: occurrence rate of class '" + c.name + "' outside (0,1]");
    if (c.kind == ClassKind::stuff) {
      ++stuff;
      if (!is_band(c.shape)) throw ConfigError("dataset: stuff class '" + c.name + "' must be a band");
      const int b = static_cast<int>(c.shape) - static_cast<int>(ShapeFamily::band_top);
      if (++bands[b] > 1) throw ConfigError("dataset: band family used twice");
    } else {
      ++things;
      if (is_band(c.shape)) throw ConfigError("dataset: thing class '" + c.name + "' cannot be a band");
    }
  }
  if (stuff < 2 || things < 3) throw ConfigError("dataset: need at least 2 stuff and 3 thing classes");
  if (source_style == target_style) throw ConfigError("dataset: source and target styles are identical");
  if (!(thing_radius_min > 2.0 && thing_radius_max >= thing_radius_min))
    throw ConfigError("dataset: invalid thing radius range");
}

DatasetSpec DatasetSpec::shapeworld_default() {
  DatasetSpec s;
  // Thing hues 72 degrees apart, so a target rotation under 36 keeps every
  // class closest to its own source color.
  s.classes = {
      {0, "sky", ClassKind::stuff, ShapeFamily::band_top, 1.0, {0.45f, 0.65f, 0.95f}},
      {1, "wall", ClassKind::stuff, ShapeFamily::band_middle, 0.7, {0.60f, 0.45f, 0.38f}},
      {2, "ground", ClassKind::stuff, ShapeFamily::band_bottom, 1.0, {0.35f, 0.55f, 0.25f}},
      {3, "disk", ClassKind::thing, ShapeFamily::disk, 0.7, {0.92f, 0.20f, 0.20f}},
      {4, "square", ClassKind::thing, ShapeFamily::square, 0.6, {0.78f, 0.92f, 0.20f}},
      {5, "triangle", ClassKind::thing, ShapeFamily::triangle, 0.5, {0.20f, 0.92f, 0.49f}},
      {6, "star", ClassKind::thing, ShapeFamily::star, 0.04, {0.20f, 0.49f, 0.92f}},
      {7, "cross", ClassKind::thing, ShapeFamily::cross, 0.03, {0.78f, 0.20f, 0.92f}},
  };
  s.source_style = DomainStyle{0.0, 1.0, 0.0, 0, 0.02, 0.06};
  s.target_style = DomainStyle{30.0, 0.8, 0.12, 1, 0.03, 0.06};
  return s;
}

void AugmentationParams::validate() const {
  if (jitter_strength < 0.0 || jitter_strength >= 1.0) throw ConfigError("augmentation: jitter strength must be in [0,1)");
  if (blur_probability < 0.0 || blur_probability > 1.0)
    throw ConfigError("augmentation: blur probability must be in [0,1]");
  if (blur_sigma_min < 0.0 || blur_sigma_max < blur_sigma_min)
    throw ConfigError("augmentation: invalid blur sigma range");
  if (crop_h <= 0 || crop_w <= 0) throw ConfigError("augmentation: crop size must be positive");
}

void validate(const DatasetSpec& spec, const AugmentationParams& aug) {
  spec.validate();
  aug.validate();
  if (aug.crop_h > spec.height || aug.crop_w > spec.width)
    throw ConfigError("augmentation: crop larger than image");
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

struct Vec2 {
  double x, y;
};

std::vector<Vec2> unit_polygon(ShapeFamily shape) {
  std::vector<Vec2> v;
  switch (shape) {
    case ShapeFamily::square:
      v = {{0.8, 0.8}, {-0.8, 0.8}, {-0.8, -0.8}, {0.8, -0.8}};
      break;
    case ShapeFamily::diamond:
      v = {{0.0, 1.0}, {-0.7, 0.0}, {0.0, -1.0}, {0.7, 0.0}};
      break;
    case ShapeFamily::triangle:
      for (int k = 0; k < 3; ++k) {
        const double a = std::numbers::pi / 2 + k * 2 * std::numbers::pi / 3;
        v.push_back({std::cos(a), std::sin(a)});
      }
      break;
    case ShapeFamily::star:
      for (int k = 0; k < 10; ++k) {
        const double a = std::numbers::pi / 2 + k * std::numbers::pi / 5;
        const double r = (k % 2 == 0) ? 1.0 : 0.45;
        v.push_back({r * std::cos(a), r * std::sin(a)});
      }
      break;
    case ShapeFamily::cross: {
      const double a = 0.33;
      v = {{a, 1},  {a, a},   {1, a},   {1, -a},  {a, -a},  {a, -1},
           {-a, -1}, {-a, -a}, {-1, -a}, {-1, a}, {-a, a}, {-a, 1}};
      break;
    }
    default:
      break;
  }
  return v;
}

bool inside_polygon(const std::vector<Vec2>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

struct Thing {
  int cls;
  ShapeFamily shape;
  double cx, cy, radius, angle;
};

struct Boundary {
  double base, amp, period, phase;
  double at(double x) const { return base + amp * std::sin(2 * std::numbers::pi * x / period + phase); }
};

struct Scene {
  std::vector<int> band_class;  // band index (0 top, 1 middle, 2 bottom) -> class or -1
  Boundary upper{}, lower{};
  std::vector<Thing> things;
};

double uniform(std::mt19937_64& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

Scene sample_scene(const DatasetSpec& spec, std::mt19937_64& rng) {
  const double H = spec.height, W = spec.width;
  Scene sc;
  sc.band_class.assign(3, -1);
  for (const ClassDef& c : spec.classes) {
    if (c.kind != ClassKind::stuff) continue;
    const bool present = uniform(rng, 0.0, 1.0) < c.rate;
    if (present) sc.band_class[static_cast<int>(c.shape) - static_cast<int>(ShapeFamily::band_top)] = c.id;
  }
  if (std::all_of(sc.band_class.begin(), sc.band_class.end(), [](int c) { return c < 0; })) {
    for (const ClassDef& c : spec.classes) {
      if (c.kind == ClassKind::stuff) {
        sc.band_class[static_cast<int>(c.shape) - static_cast<int>(ShapeFamily::band_top)] = c.id;
        break;
      }
    }
  }
  sc.upper = {uniform(rng, 0.22 * H, 0.40 * H), uniform(rng, 0.0, 0.05 * H), uniform(rng, 0.5 * W, 1.5 * W),
              uniform(rng, 0.0, 2 * std::numbers::pi)};
  sc.lower = {sc.upper.base + uniform(rng, 0.15 * H, 0.28 * H), uniform(rng, 0.0, 0.05 * H),
              uniform(rng, 0.5 * W, 1.5 * W), uniform(rng, 0.0, 2 * std::numbers::pi)};

  for (const ClassDef& c : spec.classes) {
    if (c.kind != ClassKind::thing) continue;
    const bool present = uniform(rng, 0.0, 1.0) < c.rate;
    const double radius = uniform(rng, spec.thing_radius_min, spec.thing_radius_max);
    const double angle = uniform(rng, 0.0, 2 * std::numbers::pi);
    if (!present) continue;
    const double margin = 0.6 * radius;
    Thing t{c.id, c.shape, 0, 0, radius, angle};
    for (int attempt = 0; attempt < 50; ++attempt) {
      t.cx = uniform(rng, margin, std::max(margin + 1e-6, W - margin));
      t.cy = uniform(rng, margin, std::max(margin + 1e-6, H - margin));
      bool ok = true;
      for (const Thing& o : sc.things) {
        if (std::hypot(o.cx - t.cx, o.cy - t.cy) < 0.85 * (o.radius + t.radius)) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    sc.things.push_back(t);
  }
  return sc;
}

void rasterize_thing(const Thing& t, int h, int w, std::vector<std::uint8_t>& label) {
  rasterize_shape(t.shape, t.cx, t.cy, t.radius, t.angle, static_cast<std::uint8_t>(t.cls), h, w, label);
}

std::vector<std::uint8_t> rasterize(const DatasetSpec& spec, const Scene& sc) {
  const int h = spec.height, w = spec.width;
  std::vector<std::uint8_t> label(static_cast<std::size_t>(h) * w, 0);
  // Each band region falls back to the nearest present band below, then above.
  std::array<int, 3> region_class{};
  for (int r = 0; r < 3; ++r) {
    int c = -1;
    for (int b = r; b < 3 && c < 0; ++b) c = sc.band_class[b];
    for (int b = r - 1; b >= 0 && c < 0; --b) c = sc.band_class[b];
    region_class[r] = c;
  }
  const bool has_middle = sc.band_class[1] >= 0;
  for (int x = 0; x < w; ++x) {
    const double b1 = sc.upper.at(x + 0.5);
    const double b2 = has_middle ? sc.lower.at(x + 0.5) : b1;
    for (int y = 0; y < h; ++y) {
      const double yc = y + 0.5;
      const int region = yc < b1 ? 0 : (yc < b2 ? 1 : 2);
      label[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(region_class[region]);
    }
  }
  for (const Thing& t : sc.things) rasterize_thing(t, h, w, label);
  // A thing hidden by later things is drawn again on top.
  for (int pass = 0; pass < 4; ++pass) {
    bool changed = false;
    for (const Thing& t : sc.things) {
      if (std::find(label.begin(), label.end(), static_cast<std::uint8_t>(t.cls)) == label.end()) {
        rasterize_thing(t, h, w, label);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return label;
}

std::array<float, 3> styled_color(const std::array<float, 3>& rgb, const DomainStyle& style) {
  const double th = style.hue_rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th), k = 1.0 / 3.0, q = std::sqrt(k);
  const double m[3][3] = {{c + (1 - c) * k, (1 - c) * k - q * s, (1 - c) * k + q * s},
                          {(1 - c) * k + q * s, c + (1 - c) * k, (1 - c) * k - q * s},
                          {(1 - c) * k - q * s, (1 - c) * k + q * s, c + (1 - c) * k}};
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = m[i][0] * rgb[0] + m[i][1] * rgb[1] + m[i][2] * rgb[2];
  const double gray = (out[0] + out[1] + out[2]) / 3.0;
  std::array<float, 3> res{};
  for (int i = 0; i < 3; ++i)
    res[i] = static_cast<float>(std::clamp(gray + style.saturation * (out[i] - gray), 0.0, 1.0));
  return res;
}

MatF box_blur(const MatF& img, int h, int w, int radius) {
  if (radius <= 0) return img;
  MatF tmp(img.rows(), img.cols());
  MatF out(img.rows(), img.cols());
  const float norm = 1.0f / static_cast<float>(2 * radius + 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Eigen::RowVector3f acc = Eigen::RowVector3f::Zero();
      for (int d = -radius; d <= radius; ++d) acc += img.row(static_cast<Eigen::Index>(y) * w + std::clamp(x + d, 0, w - 1));
      tmp.row(static_cast<Eigen::Index>(y) * w + x) = acc * norm;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Eigen::RowVector3f acc = Eigen::RowVector3f::Zero();
      for (int d = -radius; d <= radius; ++d) acc += tmp.row(static_cast<Eigen::Index>(std::clamp(y + d, 0, h - 1)) * w + x);
      out.row(static_cast<Eigen::Index>(y) * w + x) = acc * norm;
    }
  }
  return out;
}

MatF paint(const DatasetSpec& spec, const std::vector<std::uint8_t>& label, const DomainStyle& style,
           std::mt19937_64& rng) {
  const int h = spec.height, w = spec.width;
  const int C = spec.num_classes();
  std::vector<std::array<float, 3>> colors(C);
  for (int c = 0; c < C; ++c) {
    std::array<float, 3> base = spec.classes[c].color;
    for (float& v : base) v = static_cast<float>(v + uniform(rng, -style.color_variation, style.color_variation));
    colors[c] = styled_color(base, style);
  }
  // Low-frequency texture: three random plane waves.
  struct Wave {
    double kx, ky, phase, weight;
  };
  std::array<Wave, 3> waves{};
  for (Wave& wv : waves) {
    const double dir = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double period = uniform(rng, 16.0, 48.0);
    wv = {std::cos(dir) * 2 * std::numbers::pi / period, std::sin(dir) * 2 * std::numbers::pi / period,
          uniform(rng, 0.0, 2 * std::numbers::pi), uniform(rng, 0.5, 1.0)};
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  MatF img(static_cast<Eigen::Index>(h) * w, 3);
  for (int y = 0; y < h; ++y) {
    const float shade = static_cast<float>(1.0 + 0.08 * (0.5 - (y + 0.5) / h));
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      double tex = 0.0;
      for (const Wave& wv : waves) tex += wv.weight * std::sin(wv.kx * x + wv.ky * y + wv.phase);
      tex *= style.texture_amplitude / 2.0;
      const auto& col = colors[label[p]];
      for (int ch = 0; ch < 3; ++ch) {
        const double v = col[ch] * shade + tex + style.noise_sigma * noise(rng);
        img(static_cast<Eigen::Index>(p), ch) = static_cast<float>(v);
      }
    }
  }
  img = box_blur(img, h, w, style.blur_radius);
  return img.cwiseMax(0.0f).cwiseMin(1.0f);
}

std::uint64_t split_tag(Split s) { return 100 + static_cast<std::uint64_t>(s); }

int split_count(const DatasetSpec& spec, Split s) {
  switch (s) {
    case Split::source_train: return spec.num_source;
    case Split::target_train: return spec.num_target;
    case Split::target_val: return spec.num_target_val;
  }
  return 0;
}

}  // namespace

void rasterize_shape(ShapeFamily shape, double cx, double cy, double radius, double angle, std::uint8_t value,
                     int h, int w, std::vector<std::uint8_t>& label) {
  if (label.size() != static_cast<std::size_t>(h) * w) throw ShapeError("rasterize_shape: label size mismatch");
  const std::vector<Vec2> poly = unit_polygon(shape);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + radius + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + radius + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x + 0.5 - cx) / radius;
      const double dy = (y + 0.5 - cy) / radius;
      bool in;
      if (shape == ShapeFamily::disk) {
        in = dx * dx + dy * dy <= 1.0;
      } else if (poly.empty()) {
        throw ConfigError("rasterize_shape: bands are not shapes");
      } else {
        const double u = ca * dx + sa * dy;
        const double v = -sa * dx + ca * dy;
        in = inside_polygon(poly, u, v);
      }
      if (in) label[static_cast<std::size_t>(y) * w + x] = value;
    }
  }
}

SegSample render_sample(const DatasetSpec& spec, Split split, std::uint32_t index) {
  std::mt19937_64 scene_rng(derive_seed(spec.seed, {split_tag(split), index, 1}));
  std::mt19937_64 style_rng(derive_seed(spec.seed, {split_tag(split), index, 2}));
  const Scene sc = sample_scene(spec, scene_rng);
  SegSample s;
  s.h = spec.height;
  s.w = spec.width;
  s.id = index;
  s.domain = split == Split::source_train ? Domain::source : Domain::target;
  s.label = rasterize(spec, sc);
  s.image = paint(spec, s.label, s.domain == Domain::source ? spec.source_style : spec.target_style, style_rng);
  return s;
}

std::pair<SegSample, SegSample> render_scene_pair(const DatasetSpec& spec, std::uint32_t index) {
  SegSample src = render_sample(spec, Split::source_train, index);
  std::mt19937_64 style_rng(derive_seed(spec.seed, {split_tag(Split::target_train), index, 2}));
  SegSample tgt = src;
  tgt.domain = Domain::target;
  tgt.image = paint(spec, tgt.label, spec.target_style, style_rng);
  return {std::move(src), std::move(tgt)};
}

std::vector<SegSample> generate_split(const DatasetSpec& spec, Split split) {
  spec.validate();
  const int n = split_count(spec, split);
  std::vector<SegSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(render_sample(spec, split, static_cast<std::uint32_t>(i)));
  return out;
}

GeneratedDataset generate_dataset(const DatasetSpec& spec) {
  GeneratedDataset d;
  d.source = generate_split(spec, Split::source_train);
  d.target = generate_split(spec, Split::target_train);
  d.target_val = generate_split(spec, Split::target_val);
  return d;
}

// ---------------------------------------------------------------------------
// Augmentation

SegSample random_crop(const SegSample& sample, int h, int w, std::mt19937_64& rng) {
  if (h <= 0 || w <= 0 || h > sample.h || w > sample.w) throw ConfigError("random_crop: crop exceeds image");
  const int y0 = std::uniform_int_distribution<int>(0, sample.h - h)(rng);
  const int x0 = std::uniform_int_distribution<int>(0, sample.w - w)(rng);
  SegSample out;
  out.h = h;
  out.w = w;
  out.id = sample.id;
  out.domain = sample.domain;
  out.image.resize(static_cast<Eigen::Index>(h) * w, sample.image.cols());
  out.label.resize(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const Eigen::Index src = static_cast<Eigen::Index>(y0 + y) * sample.w + x0;
    out.image.middleRows(static_cast<Eigen::Index>(y) * w, w) = sample.image.middleRows(src, w);
    std::copy_n(sample.label.begin() + src, w, out.label.begin() + static_cast<std::size_t>(y) * w);
  }
  return out;
}

MatF gaussian_blur(const MatF& image, int h, int w, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    sum += k[i + radius];
  }
  for (float& v : k) v = static_cast<float>(v / sum);
  const Eigen::Index c = image.cols();
  MatF tmp = MatF::Zero(image.rows(), c);
  MatF out = MatF::Zero(image.rows(), c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int d = -radius; d <= radius; ++d)
        tmp.row(static_cast<Eigen::Index>(y) * w + x) +=
            k[d + radius] * image.row(static_cast<Eigen::Index>(y) * w + std::clamp(x + d, 0, w - 1));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int d = -radius; d <= radius; ++d)
        out.row(static_cast<Eigen::Index>(y) * w + x) +=
            k[d + radius] * tmp.row(static_cast<Eigen::Index>(std::clamp(y + d, 0, h - 1)) * w + x);
  return out;
}

SegSample augment(const SegSample& sample, const AugmentationParams& params, std::mt19937_64& rng) {
  SegSample out = sample;
  const double s = params.jitter_strength;
  if (s > 0.0) {
    for (int c = 0; c < 3; ++c) {
      const float a = static_cast<float>(uniform(rng, 1.0 - s, 1.0 + s));
      const float b = static_cast<float>(uniform(rng, -s, s));
      out.image.col(c) = (out.image.col(c).array() * a + b).matrix();
    }
  }
  if (params.blur_probability > 0.0) {
    const double u = uniform(rng, 0.0, 1.0);
    if (u < params.blur_probability) {
      const double sigma = params.blur_sigma_max > params.blur_sigma_min
                               ? uniform(rng, params.blur_sigma_min, params.blur_sigma_max)
                               : params.blur_sigma_min;
      out.image = gaussian_blur(out.image, out.h, out.w, sigma);
    }
  }
  if (s > 0.0 || params.blur_probability > 0.0) out.image = out.image.cwiseMax(0.0f).cwiseMin(1.0f);
  return out;
}

// ---------------------------------------------------------------------------
// JSON and disk cache

json to_json(const DatasetSpec& spec) {
  json classes = json::array();
  for (const ClassDef& c : spec.classes) {
    classes.push_back({{"id", c.id},
                       {"name", c.name},
                       {"kind", to_string(c.kind)},
                       {"shape", to_string(c.shape)},
                       {"rate", c.rate},
                       {"color", c.color}});
  }
  auto style = [](const DomainStyle& s) {
    return json{{"hue_rotation_deg", s.hue_rotation_deg}, {"saturation", s.saturation},
                {"texture_amplitude", s.texture_amplitude}, {"blur_radius", s.blur_radius},
                {"noise_sigma", s.noise_sigma}, {"color_variation", s.color_variation}};
  };
  return json{{"classes", classes},
              {"height", spec.height},
              {"width", spec.width},
              {"num_source", spec.num_source},
              {"num_target", spec.num_target},
              {"num_target_val", spec.num_target_val},
              {"source_style", style(spec.source_style)},
              {"target_style", style(spec.target_style)},
              {"thing_radius_min", spec.thing_radius_min},
              {"thing_radius_max", spec.thing_radius_max},
              {"seed", spec.seed}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s = DatasetSpec::shapeworld_default();
  if (j.contains("classes")) {
    s.classes.clear();
    for (const auto& c : j.at("classes")) {
      ClassDef d;
      d.id = c.at("id").get<int>();
      d.name = c.at("name").get<std::string>();
      d.kind = class_kind_from_string(c.at("kind").get<std::string>());
      d.shape = shape_family_from_string(c.at("shape").get<std::string>());
      d.rate = c.at("rate").get<double>();
      if (c.contains("color")) d.color = c.at("color").get<std::array<float, 3>>();
      s.classes.push_back(d);
    }
  }
  auto style = [](const json& js, DomainStyle base) {
    base.hue_rotation_deg = js.value("hue_rotation_deg", base.hue_rotation_deg);
    base.saturation = js.value("saturation", base.saturation);
    base.texture_amplitude = js.value("texture_amplitude", base.texture_amplitude);
    base.blur_radius = js.value("blur_radius", base.blur_radius);
    base.noise_sigma = js.value("noise_sigma", base.noise_sigma);
    base.color_variation = js.value("color_variation", base.color_variation);
    return base;
  };
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.num_source = j.value("num_source", s.num_source);
  s.num_target = j.value("num_target", s.num_target);
  s.num_target_val = j.value("num_target_val", s.num_target_val);
  if (j.contains("source_style")) s.source_style = style(j.at("source_style"), s.source_style);
  if (j.contains("target_style")) s.target_style = style(j.at("target_style"), s.target_style);
  s.thing_radius_min = j.value("thing_radius_min", s.thing_radius_min);
  s.thing_radius_max = j.value("thing_radius_max", s.thing_radius_max);
  s.seed = j.value("seed", s.seed);
  return s;
}

namespace {

constexpr const char* kCacheFormat = "shapeworld-cache-v1";

std::string sample_stem(std::uint32_t id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06u", id);
  return buf;
}

void write_split(const fs::path& dir, const std::vector<SegSample>& samples) {
  fs::create_directories(dir);
  for (const SegSample& s : samples) {
    const std::string stem = sample_stem(s.id);
    std::ofstream img(dir / (stem + ".img"), std::ios::binary);
    // MatF is row-major, so rows*cols floats are contiguous in HWC order.
    img.write(reinterpret_cast<const char*>(s.image.data()), static_cast<std::streamsize>(s.image.size() * sizeof(float)));
    std::ofstream lab(dir / (stem + ".lab"), std::ios::binary);
    lab.write(reinterpret_cast<const char*>(s.label.data()), static_cast<std::streamsize>(s.label.size()));
    if (!img || !lab) throw FormatError("failed to write sample " + stem + " in " + dir.string());
  }
}

std::vector<SegSample> read_split(const fs::path& dir, int count, int h, int w, Domain domain) {
  std::vector<SegSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    SegSample s;
    s.h = h;
    s.w = w;
    s.id = static_cast<std::uint32_t>(i);
    s.domain = domain;
    s.image.resize(static_cast<Eigen::Index>(h) * w, 3);
    s.label.resize(static_cast<std::size_t>(h) * w);
    const std::string stem = sample_stem(s.id);
    std::ifstream img(dir / (stem + ".img"), std::ios::binary);
    std::ifstream lab(dir / (stem + ".lab"), std::ios::binary);
    img.read(reinterpret_cast<char*>(s.image.data()), static_cast<std::streamsize>(s.image.size() * sizeof(float)));
    lab.read(reinterpret_cast<char*>(s.label.data()), static_cast<std::streamsize>(s.label.size()));
    if (!img || !lab) throw FormatError("missing or truncated sample " + stem + " in " + dir.string());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void save_dataset(const fs::path& root, const DatasetSpec& spec, const GeneratedDataset& data) {
  fs::create_directories(root);
  write_split(root / to_string(Split::source_train), data.source);
  write_split(root / to_string(Split::target_train), data.target);
  write_split(root / to_string(Split::target_val), data.target_val);
  json manifest{{"format", kCacheFormat},
                {"spec", to_json(spec)},
                {"seed", spec.seed},
                {"splits",
                 {{to_string(Split::source_train), data.source.size()},
                  {to_string(Split::target_train), data.target.size()},
                  {to_string(Split::target_val), data.target_val.size()}}},
                {"image_dtype", "float32"},
                {"image_layout", "HWC"},
                {"label_dtype", "uint8"},
                {"ignore_label", kIgnoreLabel}};
  std::ofstream(root / "manifest.json") << manifest.dump(2) << "\n";
}

LoadedDataset load_dataset(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw FormatError("no manifest.json in " + root.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  if (manifest.value("format", "") != kCacheFormat) throw FormatError("unsupported dataset cache format");
  LoadedDataset out;
  out.spec = dataset_spec_from_json(manifest.at("spec"));
  const auto& splits = manifest.at("splits");
  const int h = out.spec.height, w = out.spec.width;
  out.data.source = read_split(root / to_string(Split::source_train),
                               splits.at(to_string(Split::source_train)).get<int>(), h, w, Domain::source);
  out.data.target = read_split(root / to_string(Split::target_train),
                               splits.at(to_string(Split::target_train)).get<int>(), h, w, Domain::target);
  out.data.target_val = read_split(root / to_string(Split::target_val),
                                   splits.at(to_string(Split::target_val)).get<int>(), h, w, Domain::target);
  return out;
}

GeneratedDataset load_or_generate(const fs::path& root, const DatasetSpec& spec) {
  if (!root.empty() && fs::exists(root / "manifest.json")) {
    try {
      LoadedDataset cached = load_dataset(root);
      if (to_json(cached.spec) == to_json(spec)) return std::move(cached.data);
    } catch (const FormatError&) {
      // Stale or partial cache: regenerate below.
    }
  }
  GeneratedDataset data = generate_dataset(spec);
  if (!root.empty()) save_dataset(root, spec, data);
  return data;
}

}  // namespace daformer
