#pragma once

// Image-space grasp representations: the center/angle/width/quality pose, its
// oriented-rectangle form, pi-periodic angle helpers and rectangle IOU.
//
// Coordinates: u = column, v = row, origin top-left. A grasp angle a points
// the gripper-opening axis along (cos a, sin a) in (u, v).

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspkit/error.hpp"

namespace graspkit {

constexpr double kPi = std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Wraps theta into (-pi/2, pi/2]; grasps are symmetric under a half turn.
inline double normalize_angle(double theta) {
  if (!std::isfinite(theta)) throw domain_error("normalize_angle: non-finite angle");
  double r = theta - kPi * std::ceil((theta - kPi / 2) / kPi);
  // ceil() can land one period off when theta - pi/2 is within rounding of a
  // multiple of pi.
  if (r <= -kPi / 2) r += kPi;
  if (r > kPi / 2) r -= kPi;
  return r;
}

// Smallest rotation between two pi-periodic angles, in [0, pi/2].
inline double angle_diff(double a, double b) {
  const double d = std::abs(normalize_angle(a) - normalize_angle(b));
  return d > kPi / 2 ? kPi - d : d;
}

class GraspPose2D {
 public:
  // height <= 0 selects the default jaw size width / 2.
  GraspPose2D(double u, double v, double angle, double width, double height = 0.0,
              double quality = 1.0)
      : u_(u), v_(v), angle_(normalize_angle(angle)), width_(width),
        height_(height > 0.0 ? height : width / 2.0), quality_(quality) {
    if (!std::isfinite(u) || !std::isfinite(v))
      throw domain_error("GraspPose2D: non-finite center");
    if (!(width > 0.0) || !std::isfinite(width))
      throw domain_error("GraspPose2D: width must be > 0");
    if (!std::isfinite(height_)) throw domain_error("GraspPose2D: non-finite height");
    if (!(quality >= 0.0 && quality <= 1.0))
      throw domain_error("GraspPose2D: quality must lie in [0, 1]");
  }

  double u() const noexcept { return u_; }
  double v() const noexcept { return v_; }
  double angle() const noexcept { return angle_; }
  double width() const noexcept { return width_; }
  double height() const noexcept { return height_; }
  double quality() const noexcept { return quality_; }
  Vec2 center() const noexcept { return {u_, v_}; }

 private:
  double u_, v_, angle_, width_, height_, quality_;
};

inline double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * a;
}

// Four vertices, counterclockwise (positive shoelace area in (u, v)).
// Edge 0->1 runs along the opening axis (length = width), edge 1->2 along the
// jaw (length = height).
class GraspRect {
 public:
  static constexpr double kParallelTolerance = 1e-6;

  explicit GraspRect(std::array<Vec2, 4> vertices) : v_(vertices) {
    for (const auto& p : v_)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw domain_error("GraspRect: non-finite vertex");
    double area = polygon_area({v_.begin(), v_.end()});
    if (area < 0.0) {
      // Reverse winding but keep edge 0->1 on the same line.
      v_ = {v_[1], v_[0], v_[3], v_[2]};
      area = -area;
    }
    if (!(area > 0.0)) throw domain_error("GraspRect: degenerate quadrilateral");
    for (int i = 0; i < 2; ++i) {
      const Vec2 e0 = v_[i + 1] - v_[i];
      const Vec2 e1 = v_[(i + 2) % 4] - v_[(i + 3) % 4];
      const double ang = std::atan2(std::abs(cross(e0, e1)), dot(e0, e1));
      if (ang > kParallelTolerance)
        throw domain_error("GraspRect: opposite edges are not parallel");
    }
  }

  const std::array<Vec2, 4>& vertices() const noexcept { return v_; }
  const Vec2& operator[](std::size_t i) const { return v_[i]; }
  double area() const { return polygon_area({v_.begin(), v_.end()}); }
  Vec2 center() const { return 0.25 * (v_[0] + v_[1] + v_[2] + v_[3]); }
  double width() const { return norm(v_[1] - v_[0]); }
  double height() const { return norm(v_[2] - v_[1]); }
  double angle() const {
    const Vec2 e = v_[1] - v_[0];
    return normalize_angle(std::atan2(e.y, e.x));
  }

 private:
  std::array<Vec2, 4> v_;
};

inline GraspRect rect_from_grasp(const GraspPose2D& g) {
  const double c = std::cos(g.angle()), s = std::sin(g.angle());
  const double hw = g.width() / 2.0, hh = g.height() / 2.0;
  const std::array<Vec2, 4> local = {Vec2{-hw, -hh}, Vec2{hw, -hh}, Vec2{hw, hh}, Vec2{-hw, hh}};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i)
    out[i] = {g.u() + c * local[i].x - s * local[i].y, g.v() + s * local[i].x + c * local[i].y};
  return GraspRect(out);
}

inline GraspPose2D grasp_from_rect(const GraspRect& r, double quality = 1.0) {
  const Vec2 c = r.center();
  return GraspPose2D(c.x, c.y, r.angle(), r.width(), r.height(), quality);
}

// Least-squares rectangle through four annotated corners (hand-labelled
// quadrilaterals are only approximately rectangular).
inline GraspRect fit_rect(const std::array<Vec2, 4>& quad) {
  const Vec2 c = 0.25 * (quad[0] + quad[1] + quad[2] + quad[3]);
  const Vec2 e01 = quad[1] - quad[0], e32 = quad[2] - quad[3];
  const Vec2 along = 0.5 * (e01 + e32);
  const double width = 0.5 * (norm(e01) + norm(e32));
  const double height = 0.5 * (norm(quad[2] - quad[1]) + norm(quad[3] - quad[0]));
  if (!(width > 0.0) || !(height > 0.0)) throw domain_error("fit_rect: degenerate quadrilateral");
  return rect_from_grasp(GraspPose2D(c.x, c.y, std::atan2(along.y, along.x), width, height));
}

// Sutherland-Hodgman: clips `subject` against the convex CCW polygon `clip`.
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  for (std::size_t i = 0, n = clip.size(); i < n && !subject.empty(); ++i) {
    const Vec2 a = clip[i], b = clip[(i + 1) % n];
    const Vec2 edge = b - a;
    std::vector<Vec2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t j = 0, m = subject.size(); j < m; ++j) {
      const Vec2 p = subject[j], q = subject[(j + 1) % m];
      const double sp = cross(edge, p - a), sq = cross(edge, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

inline double intersection_area(const GraspRect& a, const GraspRect& b) {
  const auto& va = a.vertices();
  const auto& vb = b.vertices();
  const auto poly = clip_convex({va.begin(), va.end()}, {vb.begin(), vb.end()});
  return poly.size() < 3 ? 0.0 : std::abs(polygon_area(poly));
}

inline double iou(const GraspRect& a, const GraspRect& b) {
  const double aa = a.area(), ab = b.area();
  if (!(aa > 0.0) || !(ab > 0.0)) throw domain_error("iou: degenerate rectangle");
  const double inter = intersection_area(a, b);
  const double uni = aa + ab - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// JSON forms: grasp objects and rectangles as [[x, y] x 4].
inline nlohmann::json to_json(const GraspPose2D& g) {
  return {{"u", g.u()},         {"v", g.v()},           {"angle", g.angle()},
          {"width", g.width()}, {"height", g.height()}, {"quality", g.quality()}};
}

inline GraspPose2D grasp_from_json(const nlohmann::json& j) {
  try {
    return GraspPose2D(j.at("u").get<double>(), j.at("v").get<double>(),
                       j.at("angle").get<double>(), j.at("width").get<double>(),
                       j.value("height", 0.0), j.value("quality", 1.0));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("grasp json: ") + e.what());
  }
}

inline nlohmann::json to_json(const GraspRect& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : r.vertices()) out.push_back({p.x, p.y});
  return out;
}

inline GraspRect rect_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw format_error("rectangle json: expected 4 vertices");
  std::array<Vec2, 4> v;
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_array() || j[i].size() != 2) throw format_error("rectangle json: bad vertex");
    v[i] = {j[i][0].get<double>(), j[i][1].get<double>()};
  }
  return GraspRect(v);
}

}  // namespace graspkit
