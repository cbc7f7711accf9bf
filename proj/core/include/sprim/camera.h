#pragma once

#include <string>

#include <Eigen/Core>

namespace sprim {

// Pinhole calibration. Pixel (u, v) samples the continuous image coordinate
// (u, v); the valid interpolation domain is [0, w-1] x [0, h-1].
struct Intrinsics {
  double fu = 1.0;
  double fv = 1.0;
  double cu = 0.0;
  double cv = 0.0;
  int width = 1;
  int height = 1;

  // Throws DomainError when the invariants (positive focals, principal point
  // inside the image) do not hold.
  void Validate() const;

  Eigen::Matrix3d K() const;

  // Intrinsics of pyramid level `level` built by 2x2 box averaging. Focal
  // lengths halve per level and the principal point follows the pixel-center
  // convention: c' = (c + 0.5) / 2 - 0.5.
  Intrinsics AtLevel(int level) const;

  bool Contains(const Eigen::Vector2d& uv) const {
    return uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() <= width - 1 &&
           uv.y() <= height - 1;
  }
};

// pi(x) = (fu x / z + cu, fv y / z + cv). Throws DomainError for z <= 0.
Eigen::Vector2d Project(const Eigen::Vector3d& point, const Intrinsics& intr);

// pi^-1(u, z) = z K^-1 (u, v, 1). Throws DomainError for depth <= 0.
Eigen::Vector3d Unproject(const Eigen::Vector2d& pixel, double depth,
                          const Intrinsics& intr);

// K^-1 (u, v, 1): the viewing ray with unit z component.
inline Eigen::Vector3d PixelRay(double u, double v, const Intrinsics& intr) {
  return {(u - intr.cu) / intr.fu, (v - intr.cv) / intr.fv, 1.0};
}

// Single line "fu fv cu cv width height".
Intrinsics ReadIntrinsics(const std::string& path);
void WriteIntrinsics(const std::string& path, const Intrinsics& intr);

}  // namespace sprim
