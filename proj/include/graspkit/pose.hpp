#pragma once

// Poses as position + unit quaternion (x, y, z, w). Hamilton product;
// Euler angles are extrinsic X-Y-Z (roll about x, then pitch about y, then
// yaw about z, all fixed axes), i.e. q = q_z(yaw) * q_y(pitch) * q_x(roll).

#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "graspkit/error.hpp"
#include "graspkit/geometry.hpp"

namespace graspkit {

using Quat = Eigen::Quaterniond;

// Canonical sign: w >= 0. When w vanishes (|w| <= 1e-12, which absorbs
// rounding of half-turns) the first nonzero of x, y, z is made positive.
inline Quat canonical(Quat q) {
  q.normalize();
  bool flip = q.w() < 0;
  if (std::abs(q.w()) <= 1e-12) {
    for (double c : {q.x(), q.y(), q.z()})
      if (c != 0) {
        flip = c < 0;
        break;
      }
  }
  if (flip) q.coeffs() = -q.coeffs();
  return q;
}

struct Pose7 {
  double x = 0, y = 0, z = 0;
  double qx = 0, qy = 0, qz = 0, qw = 1;

  Pose7() = default;
  Pose7(double x_, double y_, double z_, double qx_, double qy_, double qz_, double qw_)
      : x(x_), y(y_), z(z_), qx(qx_), qy(qy_), qz(qz_), qw(qw_) {}
  Pose7(const Eigen::Vector3d& p, const Quat& q) : x(p.x()), y(p.y()), z(p.z()) {
    const Quat c = canonical(q);
    qx = c.x();
    qy = c.y();
    qz = c.z();
    qw = c.w();
  }

  Eigen::Vector3d position() const { return {x, y, z}; }
  Quat rotation() const { return Quat(qw, qx, qy, qz); }
  Eigen::Matrix<double, 7, 1> vector() const { return (Eigen::Matrix<double, 7, 1>() << x, y, z, qx, qy, qz, qw).finished(); }
  static Pose7 from_vector(const Eigen::Matrix<double, 7, 1>& v) { return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]}; }

  bool finite() const { return vector().allFinite(); }
};

inline nlohmann::json to_json(const Pose7& p) { return {p.x, p.y, p.z, p.qx, p.qy, p.qz, p.qw}; }

inline Pose7 pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 7) throw format_error("pose must be a 7-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(),
          j[4].get<double>(), j[5].get<double>(), j[6].get<double>()};
}

inline Quat axis_angle(const Eigen::Vector3d& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

// Unit quaternion (x, y, z, w) of the extrinsic X-Y-Z rotation.
inline std::array<double, 4> rpy_to_quaternion(double roll, double pitch, double yaw) {
  const double cr = std::cos(roll / 2), sr = std::sin(roll / 2);
  const double cp = std::cos(pitch / 2), sp = std::sin(pitch / 2);
  const double cy = std::cos(yaw / 2), sy = std::sin(yaw / 2);
  Quat q(cy * cp * cr + sy * sp * sr, cy * cp * sr - sy * sp * cr, cy * sp * cr + sy * cp * sr,
         sy * cp * cr - cy * sp * sr);
  q = canonical(q);
  return {q.x(), q.y(), q.z(), q.w()};
}

inline Quat rpy_quat(double roll, double pitch, double yaw) {
  const auto a = rpy_to_quaternion(roll, pitch, yaw);
  return Quat(a[3], a[0], a[1], a[2]);
}

// Inverse of rpy_to_quaternion; pitch in [-pi/2, pi/2].
inline std::array<double, 3> quaternion_to_rpy(double x, double y, double z, double w) {
  const double n = std::sqrt(x * x + y * y + z * z + w * w);
  x /= n, y /= n, z /= n, w /= n;
  const double roll = std::atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y));
  const double s = std::clamp(2 * (w * y - z * x), -1.0, 1.0);
  const double pitch = std::asin(s);
  const double yaw = std::atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
  return {roll, pitch, yaw};
}

struct Intrinsics {
  double fx = 615, fy = 615, cx = 32, cy = 32;
};

// Pinhole back-projection of the grasp center; the gripper points down the
// camera axis (roll pi) and turns with the grasp angle.
inline Pose7 pose_from_grasp(const GraspPose2D& g, double depth, const Intrinsics& k) {
  if (!(depth > 0) || !std::isfinite(depth)) throw domain_error("pose_from_grasp: depth must be > 0");
  if (!(k.fx > 0 && k.fy > 0)) throw domain_error("pose_from_grasp: focal lengths must be > 0");
  const auto q = rpy_to_quaternion(kPi, 0, g.angle());
  return {(g.u() - k.cx) * depth / k.fx, (g.v() - k.cy) * depth / k.fy, depth, q[0], q[1], q[2], q[3]};
}

// Orientation error as the rotation vector of a * b^-1 (world frame).
inline Eigen::Vector3d rotation_error(const Quat& target, const Quat& current) {
  Quat d = target * current.conjugate();
  if (d.w() < 0) d.coeffs() = -d.coeffs();
  const Eigen::AngleAxisd aa(d.normalized());
  return aa.axis() * aa.angle();
}

inline double orientation_distance(const Quat& a, const Quat& b) { return rotation_error(a, b).norm(); }

}  // namespace graspkit
