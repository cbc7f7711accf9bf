#include "sprim/trajectory.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sprim/error.h"

namespace sprim {

std::vector<Eigen::Vector3d> Trajectory::Positions() const {
  std::vector<Eigen::Vector3d> out;
  out.reserve(poses.size());
  for (const TimedPose& p : poses) out.push_back(p.pose.translation());
  return out;
}

void Trajectory::Validate() const {
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (!poses[i].pose.Matrix().allFinite()) {
      throw FormatError("trajectory: non-finite pose at index " +
                        std::to_string(i));
    }
    if (i > 0 && !(poses[i].timestamp > poses[i - 1].timestamp)) {
      throw FormatError("trajectory: timestamps not strictly increasing at " +
                        std::to_string(i));
    }
  }
}

std::string FormatTumLine(const TimedPose& p) {
  const Eigen::Quaterniond q = p.pose.quaternion();
  const Eigen::Vector3d& t = p.pose.translation();
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f",
                p.timestamp, t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
  return buf;
}

TimedPose ParseTumLine(const std::string& line) {
  std::istringstream ss(line);
  double t, tx, ty, tz, qx, qy, qz, qw;
  if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
    throw FormatError("TUM line: expected 8 numbers: '" + line + "'");
  }
  const Eigen::Quaterniond q(qw, qx, qy, qz);
  if (!(q.norm() > 1e-12)) {
    throw FormatError("TUM line: zero quaternion: '" + line + "'");
  }
  return {t, Pose(q.normalized(), Eigen::Vector3d(tx, ty, tz))};
}

Trajectory ReadTumTrajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open trajectory file: " + path);
  }
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    traj.poses.push_back(ParseTumLine(line));
  }
  traj.Validate();
  return traj;
}

void WriteTumTrajectory(const std::string& path, const Trajectory& trajectory) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot write trajectory file: " + path);
  }
  for (const TimedPose& p : trajectory.poses) {
    out << FormatTumLine(p) << "\n";
  }
}

}  // namespace sprim
