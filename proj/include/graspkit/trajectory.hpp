#pragma once

// Four-step table-top grasp plan and its joint-space simulation.
//
//   1. home        neutral pose, at or above the transit plane
//   2. transit     above the target at table_z + T, target x, y, orientation
//   3. grasp       descend by |T - (depth_gpc + 0.2 height_gpc)|, close
//   4. return      z = table_z, open

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspkit/error.hpp"
#include "graspkit/kinematics.hpp"
#include "graspkit/pose.hpp"

namespace graspkit {

struct TableGeom {
  double table_z = 0.0;
  double transit_threshold = 0.20;

  void validate() const {
    if (!(transit_threshold > 0) || !std::isfinite(transit_threshold))
      throw config_error("table: transit_threshold must be > 0");
    if (!std::isfinite(table_z)) throw config_error("table: table_z must be finite");
  }
  double transit_z() const { return table_z + transit_threshold; }
};

// depth_gpc: vertical distance from the transit plane's measured object top
// to the grasp point; height_gpc: object height above the table.
struct ObjectGeom {
  double depth_gpc = 0.15;
  double height_gpc = 0.10;
};

inline constexpr double kSafetyFactor = 0.20;  // of height_gpc

struct Waypoint {
  std::string name;
  Pose7 pose;
  std::string event;  // "", "close", "open"
};

inline double descend_distance(const ObjectGeom& o, const TableGeom& t) {
  return std::abs(t.transit_threshold - (o.depth_gpc + kSafetyFactor * o.height_gpc));
}

inline std::vector<Waypoint> plan_trajectory(const Pose7& grasp, const ObjectGeom& obj, const TableGeom& table,
                                             const Pose7& home) {
  table.validate();
  if (!grasp.finite() || !home.finite()) throw domain_error("plan: non-finite pose");
  if (!(obj.depth_gpc >= 0) || !(obj.height_gpc >= 0)) throw domain_error("plan: object geometry must be >= 0");
  if (grasp.z < table.table_z) throw safety_error("plan: grasp pose lies below the table plane");
  if (home.z < table.transit_z())
    throw safety_error("plan: home pose z = " + std::to_string(home.z) + " lies below the transit plane");
  Pose7 transit = grasp;
  transit.z = table.transit_z();
  Pose7 down = transit;
  down.z = transit.z - descend_distance(obj, table);
  if (down.z < table.table_z)
    throw safety_error("plan: grasp height " + std::to_string(down.z) + " lies below the table plane");
  Pose7 back = grasp;
  back.z = table.table_z;
  return {{"home", home, ""}, {"transit", transit, ""}, {"grasp", down, "close"}, {"return", back, "open"}};
}

struct LogRecord {
  long t = 0;
  int segment = 0;  // index of the waypoint being approached
  Joints joints;
  Pose7 pose;
  std::vector<std::string> flags;
};

struct ExecutionLog {
  std::vector<LogRecord> records;
  std::vector<Joints> solutions;
  bool success = false;
  bool aborted = false;
  std::string message;
  std::size_t flagged = 0;
};

inline nlohmann::json to_json(const LogRecord& r) {
  return {{"t", r.t},
          {"segment", r.segment},
          {"joints", std::vector<double>(r.joints.data(), r.joints.data() + kJoints)},
          {"pose", to_json(r.pose)},
          {"flags", r.flags}};
}

inline void write_log(std::ostream& out, const ExecutionLog& log) {
  for (const auto& r : log.records) out << to_json(r).dump() << '\n';
}

inline constexpr int kInterpolationSteps = 50;

// IK per waypoint, seeded from the previous solution (the chain's home
// joints for the first), then linear joint interpolation. Steps below the
// table are flagged "collision"; steps before the grasp waypoint's segment
// below the transit plane are flagged "transit_low". The slack equals the
// IK position tolerance.
inline ExecutionLog simulate_execution(const KinematicChain& chain, const std::vector<Waypoint>& waypoints,
                                       const TableGeom& table, const IkOptions& ik_opts = {}) {
  table.validate();
  ExecutionLog log;
  if (waypoints.empty()) {
    log.aborted = true;
    log.message = "no waypoints";
    return log;
  }
  std::optional<std::size_t> grasp_idx;
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    if (waypoints[i].event == "close") {
      grasp_idx = i;
      break;
    }
  Joints seed = chain.home;
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    try {
      seed = ik(chain, waypoints[i].pose, seed, ik_opts);
    } catch (const unreachable_pose_error& e) {
      log.aborted = true;
      log.message = "waypoint " + std::to_string(i) + " (" + waypoints[i].name + "): " + e.what();
      break;
    }
    log.solutions.push_back(seed);
  }
  const double slack = ik_opts.position_tolerance;
  long t = 0;
  auto record = [&](int segment, const Joints& q) {
    LogRecord r;
    r.t = t++;
    r.segment = segment;
    r.joints = q;
    r.pose = fk(chain, q);
    if (r.pose.z < table.table_z - slack) r.flags.push_back("collision");
    const bool before_descent = !grasp_idx || std::size_t(segment) < *grasp_idx;
    if (before_descent && r.pose.z < table.transit_z() - slack) r.flags.push_back("transit_low");
    if (!r.flags.empty()) ++log.flagged;
    log.records.push_back(std::move(r));
  };
  if (!log.solutions.empty()) record(0, log.solutions[0]);
  for (std::size_t s = 1; s < log.solutions.size(); ++s)
    for (int k = 1; k <= kInterpolationSteps; ++k) {
      const double a = double(k) / kInterpolationSteps;
      record(int(s), (1 - a) * log.solutions[s - 1] + a * log.solutions[s]);
    }
  log.success = !log.aborted && log.flagged == 0;
  if (!log.aborted && log.flagged)
    log.message = std::to_string(log.flagged) + " flagged step(s)";
  return log;
}

}  // namespace graspkit
