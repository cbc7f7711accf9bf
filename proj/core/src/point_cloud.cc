#include "sprim/point_cloud.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sprim/error.h"

namespace sprim {

bool PointCloud::AllFinite() const {
  return std::all_of(points.begin(), points.end(),
                     [](const Eigen::Vector3d& p) { return p.allFinite(); });
}

void PointCloud::Append(const PointCloud& other) {
  const bool with_colors =
      colors.size() == points.size() && other.colors.size() == other.size();
  points.insert(points.end(), other.points.begin(), other.points.end());
  if (with_colors) {
    colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  } else {
    colors.clear();
  }
}

namespace {

std::uint8_t ToByte(float x) {
  return static_cast<std::uint8_t>(
      std::lround(std::clamp(x, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void WritePly(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write PLY file: " + path);
  }
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  const bool has_colors = cloud.colors.size() == cloud.size();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const float xyz[3] = {static_cast<float>(cloud.points[i].x()),
                          static_cast<float>(cloud.points[i].y()),
                          static_cast<float>(cloud.points[i].z())};
    std::uint8_t rgb[3] = {200, 200, 200};
    if (has_colors) {
      for (int c = 0; c < 3; ++c) rgb[c] = ToByte(cloud.colors[i][c]);
    }
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
  }
}

PointCloud ReadPly(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open PLY file: " + path);
  }
  std::string line;
  std::size_t count = 0;
  bool header_ok = false;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex", 0) == 0) {
      std::istringstream ss(line.substr(14));
      ss >> count;
    } else if (line == "end_header") {
      header_ok = true;
      break;
    }
  }
  if (!header_ok) {
    throw FormatError("PLY header not terminated: " + path);
  }
  PointCloud cloud;
  cloud.points.resize(count);
  cloud.colors.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    float xyz[3];
    std::uint8_t rgb[3];
    if (!in.read(reinterpret_cast<char*>(xyz), sizeof(xyz)) ||
        !in.read(reinterpret_cast<char*>(rgb), sizeof(rgb))) {
      throw FormatError("PLY payload truncated: " + path);
    }
    cloud.points[i] = Eigen::Vector3d(xyz[0], xyz[1], xyz[2]);
    cloud.colors[i] = Eigen::Vector3f(rgb[0], rgb[1], rgb[2]) / 255.0f;
  }
  return cloud;
}

}  // namespace sprim
