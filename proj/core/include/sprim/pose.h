#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sprim {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Tangent-space increment: (translation, rotation) ordering.
using PoseIncrement = Vector6d;

// Rigid transform x -> R x + t. Rotation is kept orthonormal with det +1.
class Pose {
 public:
  Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(0, 0, 0) {}
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);
  Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation);

  static Pose Identity() { return Pose(); }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  // Normalized quaternion with non-negative w.
  Eigen::Quaterniond quaternion() const;
  Eigen::Matrix4d Matrix() const;

  Pose Inverse() const;
  Pose operator*(const Pose& other) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& point) const {
    return rotation_ * point + translation_;
  }

  // Largest deviation of R^T R from identity and of det(R) from 1.
  double OrthonormalityError() const;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

Eigen::Matrix3d Hat(const Eigen::Vector3d& w);
Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& w);
Eigen::Vector3d LogSO3(const Eigen::Matrix3d& rotation);

Pose ExpSE3(const PoseIncrement& xi);
PoseIncrement LogSE3(const Pose& pose);

// Adjoint in (translation, rotation) ordering: exp(Ad_T xi) = T exp(xi) T^-1.
Matrix6d Adjoint(const Pose& pose);

// Left update exp(xi) * T followed by projection of the rotation onto SO(3).
Pose Retract(const Pose& pose, const PoseIncrement& xi);

// Closest rotation in Frobenius norm (polar decomposition via SVD).
Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& m);

// Geodesic rotation angle between two poses, radians.
double RotationAngle(const Pose& a, const Pose& b);

// Uniform-scale similarity x -> s R x + t.
struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
  // Applies the similarity to a camera-to-world pose.
  Pose Apply(const Pose& pose) const {
    return Pose(rotation * pose.rotation(), (*this) * pose.translation());
  }
};

}  // namespace sprim
