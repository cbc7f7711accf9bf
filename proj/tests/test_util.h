#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Core>

#include "sprim/pose.h"

namespace sprim::testing {

// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sprim_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string path() const { return path_.string(); }
  std::string operator/(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline std::string ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline Pose RandomPose(std::mt19937_64& rng, double max_angle = 3.0,
                       double max_translation = 2.0) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::Vector3d axis(unit(rng), unit(rng), unit(rng));
  axis.normalize();
  const double angle = max_angle * 0.5 * (unit(rng) + 1.0);
  const Eigen::Vector3d t(unit(rng), unit(rng), unit(rng));
  return Pose(ExpSO3(angle * axis), max_translation * t);
}

inline PoseIncrement RandomIncrement(std::mt19937_64& rng, double magnitude) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  PoseIncrement xi;
  for (int k = 0; k < 6; ++k) xi[k] = magnitude * unit(rng);
  return xi;
}

}  // namespace sprim::testing
