#pragma once

#include <string>
#include <vector>

#include "sprim/pose.h"

namespace sprim {

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;  // camera-to-world
};

// Timestamped camera-to-world poses with strictly increasing timestamps.
struct Trajectory {
  std::vector<TimedPose> poses;

  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }
  void Add(double timestamp, const Pose& pose) {
    poses.push_back({timestamp, pose});
  }
  std::vector<Eigen::Vector3d> Positions() const;
  // Throws FormatError when timestamps are not strictly increasing or a pose
  // is not finite.
  void Validate() const;
};

// "timestamp tx ty tz qx qy qz qw" with a normalized quaternion.
std::string FormatTumLine(const TimedPose& pose);
TimedPose ParseTumLine(const std::string& line);

// Lines starting with '#' and blank lines are skipped.
Trajectory ReadTumTrajectory(const std::string& path);
void WriteTumTrajectory(const std::string& path, const Trajectory& trajectory);

}  // namespace sprim
