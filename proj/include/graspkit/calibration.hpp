#pragma once

// Camera-to-robot pose mapping: a 7x7 matrix fitted by least squares over
// paired pose vectors, R = T C.

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "graspkit/error.hpp"
#include "graspkit/nn/archive.hpp"
#include "graspkit/pose.hpp"

namespace graspkit {

using Mat7 = Eigen::Matrix<double, 7, 7>;
using Vec7 = Eigen::Matrix<double, 7, 1>;

struct Observation {
  Pose7 camera;
  Pose7 robot;
};

struct MappingFit {
  Mat7 T;
  int rank = 0;
  std::size_t duplicates = 0;  // repeated camera poses
};

inline constexpr double kPinvTolerance = 1e-10;  // relative to the largest singular value

// Moore-Penrose pseudoinverse by SVD, small singular values zeroed.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& a, int* rank = nullptr) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cut = s.size() ? kPinvTolerance * s[0] : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > cut) {
      inv[i] = 1.0 / s[i];
      ++r;
    }
  if (rank) *rank = r;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Columns are pose vectors exactly as recorded. Poses built from rotations
// are already sign-canonical; the fit does not flip signs itself, which would
// make the relation between C and R nonlinear.
inline Eigen::MatrixXd stack_poses(const std::vector<Pose7>& poses) {
  Eigen::MatrixXd m(7, Eigen::Index(poses.size()));
  for (std::size_t i = 0; i < poses.size(); ++i) m.col(Eigen::Index(i)) = poses[i].vector();
  return m;
}

inline MappingFit fit_mapping(const std::vector<Observation>& obs) {
  std::vector<Pose7> cam, rob;
  for (const auto& o : obs) {
    if (!o.camera.finite() || !o.robot.finite()) throw domain_error("fit_mapping: non-finite observation");
    cam.push_back(o.camera);
    rob.push_back(o.robot);
  }
  const Eigen::MatrixXd C = stack_poses(cam), R = stack_poses(rob);
  MappingFit fit;
  const Eigen::MatrixXd P = pinv(C, &fit.rank);
  if (fit.rank < 7)
    throw degenerate_observations_error("fit_mapping: camera pose matrix has rank " + std::to_string(fit.rank) +
                                            " from " + std::to_string(obs.size()) + " observations; need rank 7",
                                        fit.rank);
  fit.T = R * P;
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (C.col(Eigen::Index(i)) == C.col(Eigen::Index(k))) {
        ++fit.duplicates;
        break;
      }
  return fit;
}

inline double mapping_residual(const Mat7& T, const std::vector<Observation>& obs) {
  std::vector<Pose7> cam, rob;
  for (const auto& o : obs) {
    cam.push_back(o.camera);
    rob.push_back(o.robot);
  }
  return (T * stack_poses(cam) - stack_poses(rob)).norm();
}

inline Pose7 apply_mapping(const Mat7& T, const Pose7& c) {
  if (!T.allFinite()) throw domain_error("apply_mapping: non-finite mapping");
  const Vec7 r = T * c.vector();
  const Eigen::Vector4d q = r.tail<4>();
  if (q.norm() < 1e-6) throw mapping_degenerate_error("apply_mapping: mapped quaternion has near-zero norm");
  return Pose7(Eigen::Vector3d(r[0], r[1], r[2]), Quat(q[3], q[0], q[1], q[2]));
}

// ---------------------------------------------------------------------------
// Files.

inline constexpr const char* kObservationHeader = "cx,cy,cz,cqx,cqy,cqz,cqw,rx,ry,rz,rqx,rqy,rqz,rqw";

inline std::vector<Observation> read_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open observation file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw format_error(path.string() + ": empty observation file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kObservationHeader)
    throw format_error(path.string() + ": header must be '" + std::string(kObservationHeader) + "'");
  std::vector<Observation> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        v.push_back(std::stod(cell, &pos));
        if (pos != cell.size() && cell.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw format_error(path.string() + " row " + std::to_string(row) + ": bad number '" + cell + "'");
      }
    }
    if (v.size() != 14)
      throw format_error(path.string() + " row " + std::to_string(row) + ": expected 14 values, got " +
                         std::to_string(v.size()));
    out.push_back({{v[0], v[1], v[2], v[3], v[4], v[5], v[6]}, {v[7], v[8], v[9], v[10], v[11], v[12], v[13]}});
  }
  return out;
}

inline std::string observations_csv(const std::vector<Observation>& obs) {
  std::ostringstream out;
  out.precision(17);
  out << kObservationHeader << '\n';
  for (const auto& o : obs) {
    const Vec7 c = o.camera.vector(), r = o.robot.vector();
    for (int i = 0; i < 7; ++i) out << c[i] << ',';
    for (int i = 0; i < 7; ++i) out << r[i] << (i < 6 ? ',' : '\n');
  }
  return out.str();
}

inline nlohmann::json mapping_to_json(const Mat7& T) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < 7; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < 7; ++j) row.push_back(T(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Mat7 mapping_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 7) throw format_error("mapping matrix must be a 7x7 array");
  Mat7 T;
  for (int i = 0; i < 7; ++i) {
    if (!j[i].is_array() || j[i].size() != 7) throw format_error("mapping matrix must be a 7x7 array");
    for (int k = 0; k < 7; ++k) T(i, k) = j[i][k].get<double>();
  }
  if (!T.allFinite()) throw format_error("mapping matrix has non-finite entries");
  return T;
}

inline Mat7 load_mapping(const std::filesystem::path& p) {
  try {
    return mapping_from_json(nlohmann::json::parse(nn::read_file(p)));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic protocol: 10 table positions x grasp angles {0, 45, 90, 135}
// degrees. The camera looks straight down with a small per-position tilt
// (a perfectly level camera yields qz = qw = 0 for every pose and C has
// rank 5).

inline std::vector<Pose7> protocol_camera_poses(std::mt19937_64& rng, std::size_t positions = 10) {
  std::uniform_real_distribution<double> xy(-0.15, 0.15), depth(0.45, 0.65), tilt(-0.15, 0.15);
  std::vector<Pose7> out;
  for (std::size_t p = 0; p < positions; ++p) {
    const double x = xy(rng), y = xy(rng), z = depth(rng);
    const double tx = tilt(rng), ty = tilt(rng);
    for (double deg : {0.0, 45.0, 90.0, 135.0}) {
      const Quat q = Quat(Eigen::AngleAxisd(tx, Eigen::Vector3d::UnitX())) *
                     Quat(Eigen::AngleAxisd(ty, Eigen::Vector3d::UnitY())) * rpy_quat(kPi, 0, deg * kPi / 180);
      out.emplace_back(Eigen::Vector3d(x, y, z), q);
    }
  }
  return out;
}

// A nominal rig: positions rotate by a fixed matrix, orientations by a fixed
// left quaternion product, so the whole map is a 7x7 linear operator.
inline Mat7 nominal_rig(double yaw = 0.3) {
  Mat7 T = Mat7::Zero();
  T.block<3, 3>(0, 0) = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  // Left multiplication by a fixed quaternion r, in (x, y, z, w) order.
  const Quat r(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
  const double x = r.x(), y = r.y(), z = r.z(), w = r.w();
  Eigen::Matrix4d L;
  L << w, -z, y, x,  //
      z, w, -x, y,   //
      -y, x, w, z,   //
      -x, -y, -z, w;
  T.block<4, 4>(3, 3) = L;
  return T;
}

// Robot poses R = T* C for the given camera poses, plus optional Gaussian
// noise on every component.
inline std::vector<Observation> synth_observations(const Mat7& T_star, const std::vector<Pose7>& cams,
                                                   double noise = 0.0, std::mt19937_64* rng = nullptr) {
  std::normal_distribution<double> n(0.0, noise > 0 ? noise : 1.0);
  std::vector<Observation> out;
  for (const auto& c : cams) {
    Vec7 cv = c.vector();
    Vec7 r = T_star * cv;
    if (noise > 0 && rng)
      for (int i = 0; i < 7; ++i) {
        r[i] += n(*rng);
        cv[i] += n(*rng);
      }
    out.push_back({Pose7::from_vector(cv), Pose7::from_vector(r)});
  }
  return out;
}

}  // namespace graspkit
