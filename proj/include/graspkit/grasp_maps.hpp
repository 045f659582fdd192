#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "graspkit/geometry.hpp"
#include "graspkit/tensor.hpp"

namespace graspkit {

// Widths are regressed as W / kWidthScale and clipped to [0, kWidthScale].
constexpr double kWidthScale = 150.0;

// Per-pixel grasp maps. The angle is carried as (cos 2phi, sin 2phi) so the
// regression target stays continuous across the +-pi/2 seam.
struct GraspMaps {
  Tensor<float> quality;  // HxW, [0, 1]
  Tensor<float> cos2;     // HxW, [-1, 1]
  Tensor<float> sin2;     // HxW, [-1, 1]
  Tensor<float> width;    // HxW, pixels >= 0

  GraspMaps() = default;
  GraspMaps(std::size_t h, std::size_t w)
      : quality({h, w}), cos2({h, w}), sin2({h, w}), width({h, w}) {}

  std::size_t rows() const { return quality.dim(0); }
  std::size_t cols() const { return quality.dim(1); }

  void validate() const {
    if (quality.rank() != 2) throw config_error("GraspMaps: quality map must be 2-D");
    for (const auto* t : {&cos2, &sin2, &width})
      if (t->shape() != quality.shape())
        throw config_error("GraspMaps: map shapes differ: " + shape_string(quality.shape()) +
                           " vs " + shape_string(t->shape()));
  }

  double angle_at(std::size_t i, std::size_t j) const {
    return normalize_angle(0.5 * std::atan2(double(sin2(i, j)), double(cos2(i, j))));
  }

  Tensor<float> angle_map() const {
    Tensor<float> out(quality.shape());
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t j = 0; j < cols(); ++j) out(i, j) = float(angle_at(i, j));
    return out;
  }
};

// Training targets share the prediction layout; Q is binary.
using TargetMaps = GraspMaps;

// Separable Gaussian blur with edge clamping; radius ceil(3 sigma).
inline Tensor<float> gaussian_smooth(const Tensor<float>& img, double sigma) {
  if (sigma < 0.0) throw domain_error("gaussian_smooth: sigma must be >= 0");
  if (sigma == 0.0) return img;
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& x : k) x /= sum;

  const int h = int(img.dim(0)), w = int(img.dim(1));
  Tensor<double> tmp({std::size_t(h), std::size_t(w)});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * img(i, std::clamp(j + t, 0, w - 1));
      tmp(i, j) = acc;
    }
  Tensor<float> out(img.shape());
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * tmp(std::clamp(i + t, 0, h - 1), j);
      out(i, j) = float(acc);
    }
  return out;
}

struct GraspDetection {
  GraspPose2D grasp;
  std::size_t row = 0;
  std::size_t col = 0;
  bool no_grasp = false;
};

// Top-1 grasp: argmax of the (optionally smoothed) quality map, first in
// row-major order on ties. The reported quality is the raw map value.
inline GraspDetection grasp_from_maps(const GraspMaps& maps, double smooth_sigma = 2.0) {
  maps.validate();
  if (smooth_sigma < 0.0) throw domain_error("grasp_from_maps: sigma must be >= 0");
  const std::size_t h = maps.rows(), w = maps.cols();
  if (h == 0 || w == 0) throw domain_error("grasp_from_maps: empty maps");

  const auto& raw = maps.quality;
  const bool all_zero = std::all_of(raw.values().begin(), raw.values().end(),
                                    [](float q) { return q <= 0.0f; });
  if (all_zero) {
    const std::size_t r = h / 2, c = w / 2;
    const double width = std::max(1.0, double(maps.width(r, c)));
    return {GraspPose2D(double(c), double(r), maps.angle_at(r, c), width, 0.0, 0.0), r, c, true};
  }

  const Tensor<float> q = gaussian_smooth(raw, smooth_sigma);
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = i;
  const std::size_t r = best / w, c = best % w;
  const double width = std::max(1.0, double(maps.width(r, c)));
  const double quality = std::clamp(double(raw(r, c)), 0.0, 1.0);
  return {GraspPose2D(double(c), double(r), maps.angle_at(r, c), width, 0.0, quality), r, c, false};
}

}  // namespace graspkit
