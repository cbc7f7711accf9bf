#include "sprim/camera.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sprim/error.h"

namespace sprim {

void Intrinsics::Validate() const {
  if (!(fu > 0.0) || !(fv > 0.0)) {
    throw DomainError("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw DomainError("intrinsics: image size must be positive");
  }
  if (!(cu >= 0.0 && cu < width) || !(cv >= 0.0 && cv < height)) {
    throw DomainError("intrinsics: principal point outside the image");
  }
}

Eigen::Matrix3d Intrinsics::K() const {
  Eigen::Matrix3d k;
  k << fu, 0.0, cu, 0.0, fv, cv, 0.0, 0.0, 1.0;
  return k;
}

Intrinsics Intrinsics::AtLevel(int level) const {
  Intrinsics out = *this;
  for (int i = 0; i < level; ++i) {
    out.fu *= 0.5;
    out.fv *= 0.5;
    out.cu = (out.cu + 0.5) * 0.5 - 0.5;
    out.cv = (out.cv + 0.5) * 0.5 - 0.5;
    out.width /= 2;
    out.height /= 2;
  }
  return out;
}

Eigen::Vector2d Project(const Eigen::Vector3d& point, const Intrinsics& intr) {
  if (!(point.z() > 0.0)) {
    throw DomainError("project: point is behind the camera");
  }
  const double inv_z = 1.0 / point.z();
  return {intr.fu * point.x() * inv_z + intr.cu,
          intr.fv * point.y() * inv_z + intr.cv};
}

Eigen::Vector3d Unproject(const Eigen::Vector2d& pixel, double depth,
                          const Intrinsics& intr) {
  if (!(depth > 0.0)) {
    throw DomainError("unproject: depth must be positive");
  }
  return depth * PixelRay(pixel.x(), pixel.y(), intr);
}

Intrinsics ReadIntrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open intrinsics file: " + path);
  }
  std::string line;
  std::getline(in, line);
  std::istringstream ss(line);
  Intrinsics intr;
  if (!(ss >> intr.fu >> intr.fv >> intr.cu >> intr.cv >> intr.width >>
        intr.height)) {
    throw FormatError("intrinsics: expected 'fu fv cu cv width height' in " +
                      path);
  }
  try {
    intr.Validate();
  } catch (const DomainError& e) {
    throw FormatError(std::string(e.what()) + " (" + path + ")");
  }
  return intr;
}

void WriteIntrinsics(const std::string& path, const Intrinsics& intr) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) {
    throw FormatError("cannot write intrinsics file: " + path);
  }
  std::fprintf(f, "%.17g %.17g %.17g %.17g %d %d\n", intr.fu, intr.fv, intr.cu,
               intr.cv, intr.width, intr.height);
  std::fclose(f);
}

}  // namespace sprim
