#pragma once

// Small raster plots: the ratio/accuracy line chart and grasp-map panels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graspkit/geometry.hpp"
#include "graspkit/grasp_maps.hpp"
#include "graspkit/image_io.hpp"

namespace graspkit {

struct Canvas {
  std::size_t w, h;
  std::vector<unsigned char> rgb;

  Canvas(std::size_t width, std::size_t height, std::array<unsigned char, 3> bg = {255, 255, 255})
      : w(width), h(height), rgb(width * height * 3) {
    for (std::size_t i = 0; i < w * h; ++i) std::copy(bg.begin(), bg.end(), rgb.begin() + std::ptrdiff_t(3 * i));
  }

  void set(long x, long y, std::array<unsigned char, 3> c) {
    if (x < 0 || y < 0 || x >= long(w) || y >= long(h)) return;
    std::copy(c.begin(), c.end(), rgb.begin() + std::ptrdiff_t(3 * (std::size_t(y) * w + std::size_t(x))));
  }

  void line(double x0, double y0, double x1, double y1, std::array<unsigned char, 3> c, int thick = 1) {
    const int n = int(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int i = 0; i <= n; ++i) {
      const double a = double(i) / n;
      const long x = std::lround(x0 + a * (x1 - x0)), y = std::lround(y0 + a * (y1 - y0));
      for (int dy = -(thick / 2); dy <= thick / 2; ++dy)
        for (int dx = -(thick / 2); dx <= thick / 2; ++dx) set(x + dx, y + dy, c);
    }
  }

  void dot(double x, double y, int r, std::array<unsigned char, 3> c) {
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r) set(std::lround(x) + dx, std::lround(y) + dy, c);
  }

  // 3x5 glyphs for digits, '.', '%' and '-', scaled by `s`.
  void text(long x, long y, const std::string& str, int s, std::array<unsigned char, 3> c) {
    static const std::array<std::uint16_t, 13> glyphs = {
        0x7B6F, 0x2C97, 0x73E7, 0x73CF, 0x5BC9, 0x79CF, 0x79EF, 0x7249, 0x7BEF, 0x7BCF,  // 0-9
        0x0002, 0x52A5, 0x01C0};                                                         // . % -
    for (char ch : str) {
      int g = -1;
      if (ch >= '0' && ch <= '9') g = ch - '0';
      else if (ch == '.') g = 10;
      else if (ch == '%') g = 11;
      else if (ch == '-') g = 12;
      if (g >= 0)
        for (int row = 0; row < 5; ++row)
          for (int col = 0; col < 3; ++col)
            if (glyphs[std::size_t(g)] >> (14 - (row * 3 + col)) & 1)
              for (int a = 0; a < s; ++a)
                for (int b = 0; b < s; ++b) set(x + col * s + b, y + row * s + a, c);
      x += 4 * s;
    }
  }

  void save(const std::filesystem::path& p) const {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    save_png_rgb8(p, w, h, rgb);
  }
};

// Perceptually ordered dark-blue -> teal -> yellow ramp, t in [0, 1].
inline std::array<unsigned char, 3> colormap(double t) {
  static const std::array<std::array<double, 3>, 5> stops = {
      {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  if (!std::isfinite(t)) t = 0;
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const std::size_t i = std::min<std::size_t>(3, std::size_t(t));
  const double f = t - double(i);
  std::array<unsigned char, 3> out;
  for (std::size_t k = 0; k < 3; ++k)
    out[k] = static_cast<unsigned char>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  return out;
}

// Accuracy (percent) against labelled ratio; axes span [0, 1] x [0, 100].
inline void plot_sweep(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& points,
                       std::optional<double> control = std::nullopt) {
  const std::size_t W = 640, H = 420;
  const double L = 70, R = 610, T = 30, B = 370;
  Canvas c(W, H);
  const std::array<unsigned char, 3> axis{40, 40, 40}, grid{225, 225, 225}, blue{31, 119, 180}, red{214, 39, 40};
  auto px = [&](double r) { return L + r * (R - L); };
  auto py = [&](double a) { return B - a / 100.0 * (B - T); };
  for (int k = 0; k <= 10; ++k) {
    c.line(L, py(k * 10), R, py(k * 10), grid);
    c.line(px(k / 10.0), T, px(k / 10.0), B, grid);
  }
  c.line(L, B, R, B, axis, 2);
  c.line(L, T, L, B, axis, 2);
  for (int k = 0; k <= 10; k += 2) {
    c.text(long(L) - 50, long(py(k * 10)) - 5, std::to_string(k * 10), 2, axis);
    std::string lbl = k == 10 ? "1.0" : "0." + std::to_string(k);
    c.text(long(px(k / 10.0)) - 12, long(B) + 12, lbl, 2, axis);
  }
  auto pts = points;
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i)
    c.line(px(pts[i - 1].first), py(pts[i - 1].second), px(pts[i].first), py(pts[i].second), blue, 3);
  for (const auto& [r, a] : pts) c.dot(px(r), py(a), 5, blue);
  if (control) {
    for (double x = L; x < R; x += 12) c.line(x, py(*control), std::min(R, x + 6), py(*control), red, 2);
    c.dot(px(1.0), py(*control), 5, red);
  }
  c.save(path);
}

// Four panels side by side: input with the chosen grasp, Q, angle, width.
inline void plot_map_panels(const std::filesystem::path& path, const Image& image, const GraspMaps& maps,
                            const std::optional<GraspPose2D>& grasp = std::nullopt, std::size_t scale = 0) {
  maps.validate();
  const std::size_t h = maps.rows(), w = maps.cols();
  if (image.rank() != 3 || image.dim(1) != h || image.dim(2) != w)
    throw config_error("plot_map_panels: image and maps differ in size");
  if (!scale) scale = std::max<std::size_t>(1, 256 / std::max(h, w));
  const std::size_t pw = w * scale, ph = h * scale, gap = 8;
  Canvas c(4 * pw + 3 * gap, ph, {255, 255, 255});
  double wmax = 1e-9;
  for (float v : maps.width.values()) wmax = std::max(wmax, double(v));
  for (std::size_t i = 0; i < ph; ++i)
    for (std::size_t j = 0; j < pw; ++j) {
      const std::size_t r = i / scale, q = j / scale;
      std::array<unsigned char, 3> px;
      for (std::size_t k = 0; k < 3; ++k)
        px[k] = static_cast<unsigned char>(std::lround(std::clamp(image(image.dim(0) == 3 ? k : 0, r, q), 0.0f, 1.0f) * 255));
      c.set(long(j), long(i), px);
      c.set(long(pw + gap + j), long(i), colormap(maps.quality(r, q)));
      c.set(long(2 * (pw + gap) + j), long(i), colormap((maps.angle_at(r, q) + kPi / 2) / kPi));
      c.set(long(3 * (pw + gap) + j), long(i), colormap(maps.width(r, q) / wmax));
    }
  if (grasp) {
    const auto v = rect_from_grasp(*grasp).vertices();
    const double s = double(scale), o = 0.5 * s;
    for (int k = 0; k < 4; ++k) {
      const auto& a = v[std::size_t(k)];
      const auto& b = v[std::size_t((k + 1) % 4)];
      c.line(a.x * s + o, a.y * s + o, b.x * s + o, b.y * s + o, k % 2 ? std::array<unsigned char, 3>{255, 40, 40}
                                                                        : std::array<unsigned char, 3>{40, 220, 40},
             2);
    }
  }
  c.save(path);
}

}  // namespace graspkit
