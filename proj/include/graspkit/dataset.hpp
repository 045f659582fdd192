#pragma once

// Grasp datasets: Cornell ingestion, synthetic scenes with analytic grasps,
// training-target rasterization, labelled/unlabelled splits, augmentation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspkit/geometry.hpp"
#include "graspkit/grasp_maps.hpp"
#include "graspkit/image_io.hpp"

namespace graspkit {

constexpr std::size_t kMinSceneSide = 64;

struct Scene {
  Image image;  // 3xHxW, [0, 1]
  std::vector<GraspRect> positive_rects;
  std::vector<GraspRect> negative_rects;
  std::string id;
  std::size_t skipped_rects = 0;  // annotations dropped at load (NaN vertices)

  std::size_t height() const { return image.dim(1); }
  std::size_t width() const { return image.dim(2); }
};

inline void validate_scene(const Scene& s) {
  if (s.image.rank() != 3 || s.image.dim(0) != 3)
    throw config_error("scene " + s.id + ": image must be 3xHxW, got " + shape_string(s.image.shape()));
  if (s.height() < kMinSceneSide || s.width() < kMinSceneSide)
    throw config_error("scene " + s.id + ": image smaller than 64x64");
}

// ---------------------------------------------------------------------------
// Cornell layout: pcdXXXXr.png with pcdXXXXcpos.txt / pcdXXXXcneg.txt holding
// "x y" vertex lines, four per rectangle.

struct RectFileStats {
  std::vector<GraspRect> rects;
  std::size_t skipped = 0;
};

inline RectFileStats read_cornell_rects(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open annotation file " + path.string());
  std::vector<std::array<double, 2>> pts;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string sx, sy;
    if (!(ls >> sx)) continue;  // blank line
    if (!(ls >> sy)) throw format_error(path.string() + ": vertex line needs two values: '" + line + "'");
    char* end = nullptr;
    const double x = std::strtod(sx.c_str(), &end);
    if (*end) throw format_error(path.string() + ": bad number '" + sx + "'");
    const double y = std::strtod(sy.c_str(), &end);
    if (*end) throw format_error(path.string() + ": bad number '" + sy + "'");
    pts.push_back({x, y});
  }
  if (pts.size() % 4 != 0)
    throw format_error(path.string() + ": " + std::to_string(pts.size()) +
                       " vertex lines is not a multiple of 4");
  RectFileStats out;
  for (std::size_t i = 0; i < pts.size(); i += 4) {
    std::array<Vec2, 4> quad;
    bool ok = true;
    for (int k = 0; k < 4; ++k) {
      quad[k] = {pts[i + k][0], pts[i + k][1]};
      ok = ok && std::isfinite(quad[k].x) && std::isfinite(quad[k].y);
    }
    if (!ok) {
      ++out.skipped;
      continue;
    }
    try {
      out.rects.push_back(fit_rect(quad));
    } catch (const domain_error&) {
      ++out.skipped;
    }
  }
  return out;
}

inline Scene load_cornell_scene(const std::filesystem::path& image_path,
                                const std::filesystem::path& pos_path,
                                const std::optional<std::filesystem::path>& neg_path = std::nullopt) {
  if (!std::filesystem::exists(image_path)) throw io_error("missing image " + image_path.string());
  Scene s;
  s.image = load_png(image_path);
  s.id = image_path.stem().string();
  auto pos = read_cornell_rects(pos_path);
  s.positive_rects = std::move(pos.rects);
  s.skipped_rects = pos.skipped;
  if (neg_path) {
    auto neg = read_cornell_rects(*neg_path);
    s.negative_rects = std::move(neg.rects);
    s.skipped_rects += neg.skipped;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Affine scene transforms. `a` and `b` map source pixel coordinates to
// destination coordinates: p' = a p + b.

struct Affine2 {
  double a00 = 1, a01 = 0, a10 = 0, a11 = 1;
  double b0 = 0, b1 = 0;

  Vec2 apply(Vec2 p) const { return {a00 * p.x + a01 * p.y + b0, a10 * p.x + a11 * p.y + b1}; }
  Affine2 inverse() const {
    const double det = a00 * a11 - a01 * a10;
    if (std::abs(det) < 1e-15) throw domain_error("Affine2: singular transform");
    Affine2 r{a11 / det, -a01 / det, -a10 / det, a00 / det, 0, 0};
    r.b0 = -(r.a00 * b0 + r.a01 * b1);
    r.b1 = -(r.a10 * b0 + r.a11 * b1);
    return r;
  }
};

inline std::optional<GraspRect> transform_rect(const GraspRect& r, const Affine2& t,
                                               std::size_t out_h, std::size_t out_w) {
  std::array<Vec2, 4> v;
  for (int i = 0; i < 4; ++i) v[i] = t.apply(r[i]);
  GraspRect out(v);
  const double hx = double(out_w) - 0.5, hy = double(out_h) - 0.5;
  const GraspRect bounds({Vec2{-0.5, -0.5}, Vec2{hx, -0.5}, Vec2{hx, hy}, Vec2{-0.5, hy}});
  if (!(intersection_area(out, bounds) > 0.0)) return std::nullopt;
  return out;
}

inline Scene transform_scene(const Scene& s, const Affine2& t, std::size_t out_h, std::size_t out_w) {
  const Affine2 inv = t.inverse();
  Scene out;
  out.id = s.id;
  out.skipped_rects = s.skipped_rects;
  out.image = Image({s.image.dim(0), out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i)
    for (std::size_t j = 0; j < out_w; ++j) {
      const Vec2 src = inv.apply({double(j), double(i)});
      for (std::size_t c = 0; c < s.image.dim(0); ++c)
        out.image(c, i, j) = sample_bilinear(s.image, c, src.x, src.y);
    }
  for (const auto& r : s.positive_rects)
    if (auto m = transform_rect(r, t, out_h, out_w)) out.positive_rects.push_back(*m);
  for (const auto& r : s.negative_rects)
    if (auto m = transform_rect(r, t, out_h, out_w)) out.negative_rects.push_back(*m);
  return out;
}

// Rotates about the image center by `rotation` (a point (u, v) relative to the
// center maps through [[cos, sin], [-sin, cos]]), then crops a window of
// zoom * (W, H) centered at center + crop_offset and scales it back to W x H.
// Grasp angles shift by -rotation (mod pi).
inline Scene augment(const Scene& scene, double rotation, double zoom, Vec2 crop_offset = {}) {
  if (!(zoom >= 0.5 && zoom <= 1.0)) throw domain_error("augment: zoom must lie in [0.5, 1]");
  if (!std::isfinite(rotation)) throw domain_error("augment: non-finite rotation");
  const double h = double(scene.height()), w = double(scene.width());
  const Vec2 c{(w - 1) / 2, (h - 1) / 2};
  const double cr = std::cos(rotation), sr = std::sin(rotation);
  Affine2 t{cr / zoom, sr / zoom, -sr / zoom, cr / zoom, 0, 0};
  t.b0 = -(t.a00 * c.x + t.a01 * c.y) - crop_offset.x / zoom + c.x;
  t.b1 = -(t.a10 * c.x + t.a11 * c.y) - crop_offset.y / zoom + c.y;
  return transform_scene(scene, t, scene.height(), scene.width());
}

// Center square crop of side `crop` (0 = min(H, W)) resized to out x out.
inline Scene center_crop_resize(const Scene& s, std::size_t crop, std::size_t out) {
  const std::size_t side = crop ? crop : std::min(s.height(), s.width());
  if (side > s.height() || side > s.width()) throw domain_error("center_crop_resize: crop exceeds image");
  const double top = double(s.height() - side) / 2.0, left = double(s.width() - side) / 2.0;
  const double k = double(out) / double(side);
  // Pixel-center aligned: x' = (x - left + 0.5) * k - 0.5.
  Affine2 t{k, 0, 0, k, (0.5 - left) * k - 0.5, (0.5 - top) * k - 0.5};
  return transform_scene(s, t, out, out);
}

// Loads every pcd*r.png under `dir` (sorted by id); optionally center-crops
// and resizes to out_size x out_size.
inline std::vector<Scene> load_cornell_dir(const std::filesystem::path& dir, std::size_t crop = 0,
                                           std::size_t out_size = 300) {
  if (!std::filesystem::is_directory(dir)) throw io_error("not a directory: " + dir.string());
  static const std::regex name(R"(pcd(\d+)r\.png)");
  std::vector<std::filesystem::path> images;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && std::regex_match(e.path().filename().string(), name))
      images.push_back(e.path());
  std::sort(images.begin(), images.end(),
            [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  std::vector<Scene> scenes;
  for (const auto& img : images) {
    const std::string stem = img.stem().string();  // pcdXXXXr
    const std::string base = stem.substr(0, stem.size() - 1);
    const auto pos = img.parent_path() / (base + "cpos.txt");
    const auto neg = img.parent_path() / (base + "cneg.txt");
    Scene s = load_cornell_scene(img, pos,
                                 std::filesystem::exists(neg) ? std::optional(neg) : std::nullopt);
    if (out_size) s = center_crop_resize(s, crop, out_size);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

// ---------------------------------------------------------------------------
// Training targets.

inline constexpr double kRasterEps = 1e-9;

// True when (x, y) lies in the central third of `r` along its opening axis
// (full jaw extent), boundary inclusive.
inline bool in_central_third(const GraspRect& r, double x, double y) {
  const Vec2 c = r.center();
  const double a = r.angle();
  const double dx = x - c.x, dy = y - c.y;
  const double along = dx * std::cos(a) + dy * std::sin(a);
  const double across = -dx * std::sin(a) + dy * std::cos(a);
  return std::abs(along) <= r.width() / 6.0 + kRasterEps &&
         std::abs(across) <= r.height() / 2.0 + kRasterEps;
}

// Paints Q = 1, the doubled-angle pair and the clipped width over the central
// third of every positive rectangle; later rectangles overwrite earlier ones.
inline TargetMaps rasterize_targets(const Scene& scene, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || out_h > scene.height() || out_w > scene.width())
    throw domain_error("rasterize_targets: output must be non-empty and no larger than the image");
  TargetMaps t(out_h, out_w);
  const double sx = double(scene.width()) / double(out_w);
  const double sy = double(scene.height()) / double(out_h);
  const double width_scale = 0.5 * (1.0 / sx + 1.0 / sy);
  for (const auto& r : scene.positive_rects) {
    const double a = r.angle();
    const float c2 = float(std::cos(2 * a)), s2 = float(std::sin(2 * a));
    const float wv = float(std::clamp(r.width() * width_scale, 0.0, kWidthScale));
    // Bounding box of the rectangle in output pixels.
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& p : r.vertices()) {
      lo_x = std::min(lo_x, (p.x + 0.5) / sx - 0.5);
      hi_x = std::max(hi_x, (p.x + 0.5) / sx - 0.5);
      lo_y = std::min(lo_y, (p.y + 0.5) / sy - 0.5);
      hi_y = std::max(hi_y, (p.y + 0.5) / sy - 0.5);
    }
    const long i0 = std::max(0L, long(std::floor(lo_y)) - 1);
    const long i1 = std::min(long(out_h) - 1, long(std::ceil(hi_y)) + 1);
    const long j0 = std::max(0L, long(std::floor(lo_x)) - 1);
    const long j1 = std::min(long(out_w) - 1, long(std::ceil(hi_x)) + 1);
    for (long i = i0; i <= i1; ++i)
      for (long j = j0; j <= j1; ++j) {
        const double x = (j + 0.5) * sx - 0.5, y = (i + 0.5) * sy - 0.5;
        if (!in_central_third(r, x, y)) continue;
        t.quality(i, j) = 1.0f;
        t.cos2(i, j) = c2;
        t.sin2(i, j) = s2;
        t.width(i, j) = wv;
      }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Labelled / unlabelled split (whole images).

struct SplitSpec {
  double ratio = 1.0;
  std::uint64_t seed = 0;
};

inline std::size_t labelled_count(std::size_t n, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw config_error("split: ratio must lie in (0, 1]");
  // The epsilon absorbs representation error, e.g. 0.7 * 10.
  return std::size_t(std::floor(ratio * double(n) + 1e-9));
}

// Seeded permutation; the first floor(ratio * n) indices are labelled.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                                   const SplitSpec& spec) {
  if (n == 0) throw config_error("split: empty scene list");
  const std::size_t n1 = labelled_count(n, spec.ratio);
  if (n1 == 0)
    throw config_error("split: ratio " + std::to_string(spec.ratio) + " of " + std::to_string(n) +
                       " scenes leaves no labelled scene");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> lab(idx.begin(), idx.begin() + std::ptrdiff_t(n1));
  std::vector<std::size_t> unl(idx.begin() + std::ptrdiff_t(n1), idx.end());
  return {std::move(lab), std::move(unl)};
}

// Unlabelled copies carry the image only.
inline std::pair<std::vector<Scene>, std::vector<Scene>> split_by_ratio(const std::vector<Scene>& scenes,
                                                                        const SplitSpec& spec) {
  auto [li, ui] = split_indices(scenes.size(), spec);
  std::vector<Scene> lab, unl;
  for (auto i : li) lab.push_back(scenes[i]);
  for (auto i : ui) {
    Scene s;
    s.image = scenes[i].image;
    s.id = scenes[i].id;
    unl.push_back(std::move(s));
  }
  return {std::move(lab), std::move(unl)};
}

// ---------------------------------------------------------------------------
// Synthetic scenes: one solid bar or ellipse on a contrasting background with
// grasps across the object's long axis.

struct Rgb {
  float r, g, b;
};

namespace detail {

// Coverage-weighted paint with 4x4 supersampling.
template <class Inside>
void paint(Image& img, Rgb fg, Inside inside) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      int hits = 0;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          hits += inside(j - 0.375 + 0.25 * b, i - 0.375 + 0.25 * a) ? 1 : 0;
      if (!hits) continue;
      const float f = float(hits) / 16.0f;
      img(0, i, j) = (1 - f) * img(0, i, j) + f * fg.r;
      img(1, i, j) = (1 - f) * img(1, i, j) + f * fg.g;
      img(2, i, j) = (1 - f) * img(2, i, j) + f * fg.b;
    }
}

inline Image solid(std::size_t h, std::size_t w, Rgb bg) {
  Image img({3, h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      img(0, i, j) = bg.r;
      img(1, i, j) = bg.g;
      img(2, i, j) = bg.b;
    }
  return img;
}

// Opening width for an object section of the given thickness.
inline double opening_for(double thickness) { return 1.5 * thickness + 4.0; }

}  // namespace detail

inline Scene synth_bar_scene(std::size_t h, std::size_t w, Vec2 center, double length, double thickness,
                             double angle, Rgb fg = {0.9f, 0.3f, 0.2f}, Rgb bg = {0.15f, 0.15f, 0.2f},
                             std::string id = "bar") {
  Scene s;
  s.id = std::move(id);
  s.image = detail::solid(h, w, bg);
  const double ca = std::cos(angle), sa = std::sin(angle);
  detail::paint(s.image, fg, [&](double x, double y) {
    const double dx = x - center.x, dy = y - center.y;
    return std::abs(dx * ca + dy * sa) <= length / 2 && std::abs(-dx * sa + dy * ca) <= thickness / 2;
  });
  const double open = detail::opening_for(thickness);
  for (double t : {-0.25, 0.0, 0.25}) {
    const Vec2 p{center.x + t * length * ca, center.y + t * length * sa};
    s.positive_rects.push_back(rect_from_grasp(GraspPose2D(p.x, p.y, angle + kPi / 2, open)));
  }
  return s;
}

inline Scene synth_ellipse_scene(std::size_t h, std::size_t w, Vec2 center, double major, double minor,
                                 double angle, Rgb fg, Rgb bg, std::string id = "ellipse") {
  Scene s;
  s.id = std::move(id);
  s.image = detail::solid(h, w, bg);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double a = major / 2, b = minor / 2;
  detail::paint(s.image, fg, [&](double x, double y) {
    const double dx = x - center.x, dy = y - center.y;
    const double p = (dx * ca + dy * sa) / a, q = (-dx * sa + dy * ca) / b;
    return p * p + q * q <= 1.0;
  });
  for (double t : {-0.3, 0.0, 0.3}) {
    const double local = minor * std::sqrt(1.0 - 4.0 * t * t);
    const Vec2 p{center.x + t * major * ca, center.y + t * major * sa};
    s.positive_rects.push_back(rect_from_grasp(GraspPose2D(p.x, p.y, angle + kPi / 2, detail::opening_for(local))));
  }
  return s;
}

inline std::vector<Scene> synth_dataset(std::size_t n, std::uint64_t seed, std::size_t h = 64,
                                        std::size_t w = 64) {
  if (n == 0) throw config_error("synth_dataset: n must be >= 1");
  if (h < kMinSceneSide || w < kMinSceneSide) throw config_error("synth_dataset: images must be >= 64x64");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double side = double(std::min(h, w));
  std::vector<Scene> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const bool bar = unit(rng) < 0.7;
    const double length = side * (0.35 + 0.25 * unit(rng));
    const double thick = side * (0.1 + 0.1 * unit(rng));
    const double angle = kPi * unit(rng);
    const double margin = length / 2 + 2;
    const Vec2 c{margin + (double(w) - 2 * margin) * unit(rng), margin + (double(h) - 2 * margin) * unit(rng)};
    const float bgl = float(0.05 + 0.3 * unit(rng));
    const float fgl = float(0.6 + 0.35 * unit(rng));
    const Rgb bg{bgl, float(bgl * (0.8 + 0.4 * unit(rng))), float(bgl * (0.8 + 0.4 * unit(rng)))};
    const Rgb fg{float(fgl * (0.5 + 0.5 * unit(rng))), float(fgl * (0.5 + 0.5 * unit(rng))), fgl};
    std::ostringstream id;
    id << "synth_" << std::setw(5) << std::setfill('0') << k;
    out.push_back(bar ? synth_bar_scene(h, w, c, length, thick, angle, fg, bg, id.str())
                      : synth_ellipse_scene(h, w, c, length, thick * 1.2, angle, fg, bg, id.str()));
  }
  return out;
}

// One directory per scene: image.png + grasps.json (positive rectangles).
inline void export_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : scenes) {
    const auto sd = dir / s.id;
    std::filesystem::create_directories(sd);
    save_png(sd / "image.png", s.image);
    nlohmann::json rects = nlohmann::json::array();
    for (const auto& r : s.positive_rects) rects.push_back(to_json(r));
    std::ofstream(sd / "grasps.json") << rects.dump(1) << '\n';
  }
}

inline std::vector<Scene> import_scenes(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw io_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> subdirs;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory() && std::filesystem::exists(e.path() / "image.png")) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<Scene> out;
  for (const auto& sd : subdirs) {
    Scene s;
    s.id = sd.filename().string();
    s.image = load_png(sd / "image.png");
    std::ifstream in(sd / "grasps.json");
    if (in) {
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw format_error((sd / "grasps.json").string() + ": " + e.what());
      }
      for (const auto& r : j) s.positive_rects.push_back(rect_from_json(r));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Cornell layout if any pcd*r.png exists below `dir`, exported layout otherwise.
inline std::vector<Scene> load_dataset_dir(const std::filesystem::path& dir, std::size_t cornell_crop = 0,
                                           std::size_t cornell_size = 300) {
  static const std::regex name(R"(pcd(\d+)r\.png)");
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && std::regex_match(e.path().filename().string(), name))
      return load_cornell_dir(dir, cornell_crop, cornell_size);
  return import_scenes(dir);
}

}  // namespace graspkit
