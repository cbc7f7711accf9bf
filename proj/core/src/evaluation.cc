#include "sprim/evaluation.h"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "sprim/error.h"

namespace sprim {

DepthErrorReport DepthMetrics(const Image& pred, const Image& gt, double d_min,
                              double d_max) {
  if (!pred.SameShape(gt) || pred.channels() != 1) {
    throw DomainError("depth metrics: maps must be single-channel and equal in size");
  }
  DepthErrorReport r;
  double abs_sum = 0.0, sq_sum = 0.0, iabs_sum = 0.0, isq_sum = 0.0;
  const std::span<const float> p = pred.data();
  const std::span<const float> g = gt.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double z = p[k];
    const double zg = g[k];
    if (!(z > 0.0) || !(zg >= d_min && zg <= d_max)) continue;
    const double e = std::abs(z - zg);
    const double ie = std::abs(1.0 / z - 1.0 / zg);
    abs_sum += e;
    sq_sum += e * e;
    iabs_sum += ie;
    isq_sum += ie * ie;
    ++r.count;
  }
  if (r.count == 0) throw DegenerateError("depth metrics: no valid pixels");
  const double n = static_cast<double>(r.count);
  r.mae = 1000.0 * abs_sum / n;
  r.rmse = 1000.0 * std::sqrt(sq_sum / n);
  r.imae = 1000.0 * iabs_sum / n;
  r.irmse = 1000.0 * std::sqrt(isq_sum / n);
  return r;
}

double LowerMedian(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty set");
  const auto mid = values.begin() + (values.size() - 1) / 2;
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

double MedianScale(const Image& pred, const Image& gt) {
  if (!pred.SameShape(gt)) throw DomainError("median scale: size mismatch");
  std::vector<double> p, g;
  const std::span<const float> pd = pred.data();
  const std::span<const float> gd = gt.data();
  for (std::size_t k = 0; k < pd.size(); ++k) {
    if (pd[k] > 0.0f && gd[k] > 0.0f) {
      p.push_back(pd[k]);
      g.push_back(gd[k]);
    }
  }
  if (p.empty()) throw DegenerateError("median scale: no jointly valid pixels");
  const double mp = LowerMedian(std::move(p));
  if (mp == 0.0) throw DegenerateError("median scale: zero predicted median");
  return LowerMedian(std::move(g)) / mp;
}

std::vector<std::pair<std::size_t, std::size_t>> AssociateByTimestamp(
    const Trajectory& est, const Trajectory& gt, double tolerance) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < est.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double dt = std::abs(est.poses[i].timestamp - gt.poses[j].timestamp);
      if (dt <= tolerance) candidates.emplace_back(dt, i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<char> used_est(est.size(), 0), used_gt(gt.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [dt, i, j] : candidates) {
    if (used_est[i] || used_gt[j]) continue;
    used_est[i] = used_gt[j] = 1;
    pairs.emplace_back(i, j);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

double Sim3Alignment::Rmse() const {
  if (residuals.empty()) return 0.0;
  double s = 0.0;
  for (double r : residuals) s += r * r;
  return std::sqrt(s / static_cast<double>(residuals.size()));
}

namespace {

bool Collinear(const Eigen::Matrix3Xd& x) {
  const Eigen::Vector3d mean = x.rowwise().mean();
  const Eigen::Matrix3Xd centered = x.colwise() - mean;
  const Eigen::Vector3d sv =
      Eigen::JacobiSVD<Eigen::Matrix3Xd>(centered).singularValues();
  return !(sv[0] > 0.0) || sv[1] <= 1e-9 * sv[0];
}

}  // namespace

Sim3Alignment AlignSim3(const Trajectory& est, const Trajectory& gt,
                        double tolerance) {
  Sim3Alignment out;
  out.pairs = AssociateByTimestamp(est, gt, tolerance);
  const auto n = static_cast<Eigen::Index>(out.pairs.size());
  if (n < 3) {
    throw DegenerateError("Sim(3) alignment: fewer than three associated poses");
  }
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    src.col(k) = est.poses[out.pairs[k].first].pose.translation();
    dst.col(k) = gt.poses[out.pairs[k].second].pose.translation();
  }
  if (Collinear(src) || Collinear(dst)) {
    throw DegenerateError("Sim(3) alignment: positions are collinear");
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
  const Eigen::Matrix3d sr = t.topLeftCorner<3, 3>();
  const double scale = std::cbrt(sr.determinant());
  out.transform.scale = scale;
  out.transform.rotation = NearestRotation(sr / scale);
  out.transform.translation = t.topRightCorner<3, 1>();
  for (Eigen::Index k = 0; k < n; ++k) {
    out.residuals.push_back((dst.col(k) - out.transform * Eigen::Vector3d(src.col(k))).norm());
  }
  return out;
}

double AlignmentObjective(const Similarity& transform,
                          const std::vector<Eigen::Vector3d>& est,
                          const std::vector<Eigen::Vector3d>& gt) {
  double s = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    s += (gt[k] - transform * est[k]).squaredNorm();
  }
  return s;
}

double AteRmse(const Trajectory& est, const Trajectory& gt, double tolerance) {
  return AlignSim3(est, gt, tolerance).Rmse();
}

double FirstPoseAlignedRmse(const Trajectory& est, const Trajectory& gt,
                            double tolerance) {
  const auto pairs = AssociateByTimestamp(est, gt, tolerance);
  if (pairs.empty()) throw DegenerateError("no associated poses");
  const Pose align = gt.poses[pairs.front().second].pose *
                     est.poses[pairs.front().first].pose.Inverse();
  double s = 0.0;
  for (const auto& [i, j] : pairs) {
    const Eigen::Vector3d p = align * est.poses[i].pose.translation();
    s += (p - gt.poses[j].pose.translation()).squaredNorm();
  }
  return std::sqrt(s / static_cast<double>(pairs.size()));
}

double TrajectoryExtent(const Trajectory& trajectory) {
  double extent = 0.0;
  for (const TimedPose& a : trajectory.poses) {
    for (const TimedPose& b : trajectory.poses) {
      extent = std::max(extent, (a.pose.translation() - b.pose.translation()).norm());
    }
  }
  return extent;
}

}  // namespace sprim
