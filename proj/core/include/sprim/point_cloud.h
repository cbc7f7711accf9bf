#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace sprim {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  // Either empty or one RGB triple in [0, 1] per point.
  std::vector<Eigen::Vector3f> colors;

  std::size_t size() const { return points.size(); }
  bool AllFinite() const;
  void Append(const PointCloud& other);
};

// Binary little-endian PLY: float x, y, z and uchar red, green, blue.
void WritePly(const std::string& path, const PointCloud& cloud);
PointCloud ReadPly(const std::string& path);

}  // namespace sprim
