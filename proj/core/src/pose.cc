#include "sprim/pose.h"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace sprim {

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {}

Pose::Pose(const Eigen::Quaterniond& rotation,
           const Eigen::Vector3d& translation)
    : rotation_(rotation.normalized().toRotationMatrix()),
      translation_(translation) {}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  if (q.w() < 0.0) {
    q.coeffs() *= -1.0;
  }
  return q;
}

Eigen::Matrix4d Pose::Matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose Pose::Inverse() const {
  const Eigen::Matrix3d rt = rotation_.transpose();
  return Pose(rt, -(rt * translation_));
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_,
              rotation_ * other.translation_ + translation_);
}

double Pose::OrthonormalityError() const {
  const double ortho =
      (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  return std::max(ortho, std::abs(rotation_.determinant() - 1.0));
}

Eigen::Matrix3d Hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

Eigen::Matrix3d ExpSO3(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    return Eigen::Matrix3d::Identity() + Hat(w);
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Eigen::Vector3d LogSO3(const Eigen::Matrix3d& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

namespace {

// V = I + (1 - cos t)/t^2 W + (t - sin t)/t^3 W^2, with its series near zero.
Eigen::Matrix3d LeftJacobianSO3(const Eigen::Vector3d& w) {
  const double theta2 = w.squaredNorm();
  const Eigen::Matrix3d wx = Hat(w);
  double a;
  double b;
  if (theta2 < 1e-10) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Eigen::Matrix3d::Identity() + a * wx + b * wx * wx;
}

}  // namespace

Pose ExpSE3(const PoseIncrement& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  return Pose(ExpSO3(phi), LeftJacobianSO3(phi) * rho);
}

PoseIncrement LogSE3(const Pose& pose) {
  const Eigen::Vector3d phi = LogSO3(pose.rotation());
  PoseIncrement xi;
  xi.head<3>() = LeftJacobianSO3(phi).inverse() * pose.translation();
  xi.tail<3>() = phi;
  return xi;
}

Matrix6d Adjoint(const Pose& pose) {
  Matrix6d ad = Matrix6d::Zero();
  const Eigen::Matrix3d& r = pose.rotation();
  ad.topLeftCorner<3, 3>() = r;
  ad.topRightCorner<3, 3>() = Hat(pose.translation()) * r;
  ad.bottomRightCorner<3, 3>() = r;
  return ad;
}

Eigen::Matrix3d NearestRotation(const Eigen::Matrix3d& m) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Pose Retract(const Pose& pose, const PoseIncrement& xi) {
  const Pose updated = ExpSE3(xi) * pose;
  return Pose(NearestRotation(updated.rotation()), updated.translation());
}

double RotationAngle(const Pose& a, const Pose& b) {
  return LogSO3(a.rotation().transpose() * b.rotation()).norm();
}

}  // namespace sprim
