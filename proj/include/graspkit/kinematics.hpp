#pragma once

// Serial revolute chains: forward kinematics and damped-least-squares
// inverse kinematics on the 6-D pose error.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graspkit/error.hpp"
#include "graspkit/pose.hpp"

namespace graspkit {

inline constexpr int kJoints = 7;
using Joints = Eigen::Matrix<double, kJoints, 1>;

struct Joint {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();    // unit, in the joint frame
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();   // from the previous frame
  double lower = -kPi, upper = kPi;
};

struct Frame {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Quat q = Quat::Identity();

  Frame operator*(const Frame& o) const { return {p + q * o.p, (q * o.q).normalized()}; }
};

struct KinematicChain {
  std::array<Joint, kJoints> joints;
  Frame base;
  Frame tool;
  Joints home = Joints::Zero();

  void validate() const {
    for (int i = 0; i < kJoints; ++i) {
      const auto& j = joints[std::size_t(i)];
      if (std::abs(j.axis.norm() - 1.0) > 1e-9)
        throw config_error("chain: joint " + std::to_string(i) + " axis is not unit length");
      if (!(j.lower < j.upper)) throw config_error("chain: joint " + std::to_string(i) + " limits not ordered");
      if (home[i] < j.lower || home[i] > j.upper)
        throw config_error("chain: home angle of joint " + std::to_string(i) + " outside its limits");
    }
  }

  void check_limits(const Joints& q) const {
    for (int i = 0; i < kJoints; ++i) {
      const auto& j = joints[std::size_t(i)];
      if (!std::isfinite(q[i])) throw domain_error("joint " + std::to_string(i) + " is not finite");
      if (q[i] < j.lower - 1e-12 || q[i] > j.upper + 1e-12)
        throw domain_error("joint " + std::to_string(i) + " = " + std::to_string(q[i]) + " outside [" +
                           std::to_string(j.lower) + ", " + std::to_string(j.upper) + "]");
    }
  }

  Joints clamp(Joints q) const {
    for (int i = 0; i < kJoints; ++i) q[i] = std::clamp(q[i], joints[std::size_t(i)].lower, joints[std::size_t(i)].upper);
    return q;
  }
};

// Frames after each joint rotation (world), followed by the tool frame.
inline std::array<Frame, kJoints + 1> chain_frames(const KinematicChain& c, const Joints& q) {
  std::array<Frame, kJoints + 1> out;
  Frame t = c.base;
  for (int i = 0; i < kJoints; ++i) {
    const auto& j = c.joints[std::size_t(i)];
    t = t * Frame{j.offset, Quat::Identity()};
    t = t * Frame{Eigen::Vector3d::Zero(), Quat(Eigen::AngleAxisd(q[i], j.axis))};
    out[std::size_t(i)] = t;
  }
  out[kJoints] = t * c.tool;
  return out;
}

inline Pose7 fk(const KinematicChain& c, const Joints& q) {
  c.check_limits(q);
  const Frame f = chain_frames(c, q)[kJoints];
  return Pose7(f.p, f.q);
}

// Geometric Jacobian (rows: linear, angular) at the tool point.
inline Eigen::Matrix<double, 6, kJoints> jacobian(const KinematicChain& c, const Joints& q) {
  const auto f = chain_frames(c, q);
  const Eigen::Vector3d tip = f[kJoints].p;
  Eigen::Matrix<double, 6, kJoints> J;
  for (int i = 0; i < kJoints; ++i) {
    const Eigen::Vector3d z = f[std::size_t(i)].q * c.joints[std::size_t(i)].axis;
    J.block<3, 1>(0, i) = z.cross(tip - f[std::size_t(i)].p);
    J.block<3, 1>(3, i) = z;
  }
  return J;
}

struct IkOptions {
  double damping = 1e-2;
  int max_iterations = 500;
  double position_tolerance = 1e-4;     // m
  double orientation_tolerance = 1e-3;  // rad
  double max_step = 0.5;                // rad, per iteration (norm)
  int restarts = 8;                     // extra deterministic seeds after a failure
};

struct IkResult {
  Joints q;
  int iterations = 0;
  double position_residual = 0;
  double orientation_residual = 0;
};

inline std::pair<double, double> pose_residual(const Pose7& a, const Pose7& b) {
  return {(a.position() - b.position()).norm(), orientation_distance(a.rotation(), b.rotation())};
}

namespace detail {

inline IkResult dls(const KinematicChain& c, const Pose7& target, Joints q, const IkOptions& o) {
  const Eigen::Vector3d pt = target.position();
  const Quat qt = target.rotation().normalized();
  IkResult r;
  for (int it = 0;; ++it) {
    const Frame f = chain_frames(c, q)[kJoints];
    Eigen::Matrix<double, 6, 1> e;
    e.head<3>() = pt - f.p;
    e.tail<3>() = rotation_error(qt, f.q);
    r.q = q;
    r.iterations = it;
    r.position_residual = e.head<3>().norm();
    r.orientation_residual = e.tail<3>().norm();
    const bool within = r.position_residual < o.position_tolerance && r.orientation_residual < o.orientation_tolerance;
    // Keep refining well below the tolerance, so the answer is not marginal.
    if (within && (it == 0 || (r.position_residual < 1e-3 * o.position_tolerance &&
                               r.orientation_residual < 1e-3 * o.orientation_tolerance)))
      return r;
    if (it >= o.max_iterations) return r;
    const auto J = jacobian(c, q);
    const Eigen::Matrix<double, 6, 6> A =
        J * J.transpose() + o.damping * o.damping * Eigen::Matrix<double, 6, 6>::Identity();
    Joints dq = J.transpose() * A.ldlt().solve(e);
    const double n = dq.norm();
    if (n > o.max_step) dq *= o.max_step / n;
    q = c.clamp(q + dq);
  }
}

}  // namespace detail

// Solves fk(q) = target from `seed`. A seed that already meets the
// tolerance is returned unchanged. If the seed run stalls, a few
// deterministic in-limit seeds are tried before giving up.
inline IkResult ik_solve(const KinematicChain& c, const Pose7& target, const Joints& seed, const IkOptions& o = {}) {
  if (!target.finite()) throw domain_error("ik: non-finite target");
  c.check_limits(seed);
  IkResult best = detail::dls(c, target, seed, o);
  auto ok = [&](const IkResult& r) {
    return r.position_residual < o.position_tolerance && r.orientation_residual < o.orientation_tolerance;
  };
  if (ok(best)) return best;
  std::mt19937_64 rng(0x1c0ffee);
  for (int k = 0; k < o.restarts; ++k) {
    Joints s;
    for (int i = 0; i < kJoints; ++i) {
      const auto& j = c.joints[std::size_t(i)];
      s[i] = std::uniform_real_distribution<double>(0.5 * j.lower, 0.5 * j.upper)(rng);
    }
    const IkResult r = detail::dls(c, target, s, o);
    if (ok(r)) return r;
    if (r.position_residual < best.position_residual) best = r;
  }
  throw unreachable_pose_error("ik: no solution within " + std::to_string(o.max_iterations) +
                                   " iterations; residual " + std::to_string(best.position_residual) + " m, " +
                                   std::to_string(best.orientation_residual) + " rad",
                               best.position_residual, best.orientation_residual);
}

inline Joints ik(const KinematicChain& c, const Pose7& target, const Joints& seed, const IkOptions& o = {}) {
  return ik_solve(c, target, seed, o).q;
}

// ---------------------------------------------------------------------------
// Chain files. Sections [base], [tool], [home] and seven [joint] sections
// in order; vectors are space separated, angles in radians.
//
//   [joint]
//   axis = 0 0 1
//   offset = 0 0 0.1575
//   limits = -2.96 2.96

namespace detail {

inline std::vector<double> numbers(const std::string& s, std::size_t n, const std::string& what) {
  std::istringstream in(s);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  if (!in.eof() || v.size() != n)
    throw config_error("chain file: '" + what + "' expects " + std::to_string(n) + " numbers, got '" + s + "'");
  return v;
}

}  // namespace detail

inline KinematicChain parse_chain(const std::string& text) {
  KinematicChain c;
  std::istringstream in(text);
  std::string raw, section;
  int nj = 0;
  Joint* cur = nullptr;
  auto vec3 = [](const std::vector<double>& v) { return Eigen::Vector3d(v[0], v[1], v[2]); };
  while (std::getline(in, raw)) {
    std::string line = raw.substr(0, raw.find('#'));
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b, line.find_last_not_of(" \t\r") - b + 1);
    if (line.front() == '[') {
      section = line;
      cur = nullptr;
      if (section == "[joint]") {
        if (nj == kJoints) throw config_error("chain file: more than 7 joints");
        cur = &c.joints[std::size_t(nj++)];
      } else if (section != "[base]" && section != "[tool]" && section != "[home]") {
        throw config_error("chain file: unknown section " + section);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("chain file: expected key = value in '" + line + "'");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    if (section == "[joint]") {
      if (key == "axis") cur->axis = vec3(detail::numbers(val, 3, key)).normalized();
      else if (key == "offset") cur->offset = vec3(detail::numbers(val, 3, key));
      else if (key == "limits") {
        const auto v = detail::numbers(val, 2, key);
        cur->lower = v[0];
        cur->upper = v[1];
      } else throw config_error("chain file: unknown joint key '" + key + "'");
    } else if (section == "[base]" || section == "[tool]") {
      Frame& f = section == "[base]" ? c.base : c.tool;
      if (key == "position") f.p = vec3(detail::numbers(val, 3, key));
      else if (key == "rpy") {
        const auto v = detail::numbers(val, 3, key);
        f.q = rpy_quat(v[0], v[1], v[2]);
      } else throw config_error("chain file: unknown key '" + key + "' in " + section);
    } else if (section == "[home]") {
      if (key != "joints") throw config_error("chain file: unknown key '" + key + "' in [home]");
      const auto v = detail::numbers(val, kJoints, key);
      for (int i = 0; i < kJoints; ++i) c.home[i] = v[std::size_t(i)];
    } else {
      throw config_error("chain file: key outside a section");
    }
  }
  if (nj != kJoints) throw config_error("chain file: expected 7 joints, got " + std::to_string(nj));
  c.validate();
  return c;
}

inline KinematicChain load_chain(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw io_error("cannot open chain file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_chain(ss.str());
}

// Same text as configs/arm7.cfg.
inline constexpr const char* kArm7Config = R"(# 7-DOF arm with alternating z/y joint axes and offsets along the
# column. The base sits on the table plane (z = 0), 0.55 m behind the
# origin of the robot frame.
[base]
position = -0.55 0 0
rpy = 0 0 0

[joint]
axis = 0 0 1
offset = 0 0 0.1575
limits = -2.96 2.96

[joint]
axis = 0 1 0
offset = 0 0 0.2025
limits = -2.09 2.09

[joint]
axis = 0 0 1
offset = 0 0 0.2045
limits = -2.96 2.96

[joint]
axis = 0 1 0
offset = 0 0 0.2155
limits = -2.09 2.09

[joint]
axis = 0 0 1
offset = 0 0 0.1845
limits = -2.96 2.96

[joint]
axis = 0 1 0
offset = 0 0 0.2155
limits = -2.09 2.09

[joint]
axis = 0 0 1
offset = 0 0 0.081
limits = -3.05 3.05

[tool]
position = 0 0 0.126
rpy = 0 0 3.141592653589793

[home]
joints = 0 0.392 0 1.408 0 1.341 0
)";

inline KinematicChain reference_arm7() { return parse_chain(kArm7Config); }

}  // namespace graspkit
