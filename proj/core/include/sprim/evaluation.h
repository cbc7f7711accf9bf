#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sprim/image.h"
#include "sprim/pose.h"
#include "sprim/trajectory.h"

namespace sprim {

struct DepthErrorReport {
  double mae = 0.0;    // mm
  double rmse = 0.0;   // mm
  double imae = 0.0;   // 1/km
  double irmse = 0.0;  // 1/km
  std::size_t count = 0;
};

// Errors over pixels where pred > 0 and gt lies in [d_min, d_max]; inputs in
// meters. Throws DegenerateError when no pixel qualifies.
DepthErrorReport DepthMetrics(const Image& pred, const Image& gt,
                              double d_min = 0.2, double d_max = 5.0);

// median(gt) / median(pred) over pixels where both are positive. Even counts
// use the lower middle element.
double MedianScale(const Image& pred, const Image& gt);

// Lower-middle median; throws DomainError on empty input.
double LowerMedian(std::vector<double> values);

inline constexpr double kAssociationTolerance = 0.02;

// Index pairs (est, gt) matched by nearest timestamp within `tolerance`,
// each pose used at most once, in increasing est order.
std::vector<std::pair<std::size_t, std::size_t>> AssociateByTimestamp(
    const Trajectory& est, const Trajectory& gt,
    double tolerance = kAssociationTolerance);

struct Sim3Alignment {
  Similarity transform;  // maps estimated positions onto ground truth
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> residuals;  // position error per pair after alignment

  double Rmse() const;
};

// Closed-form least-squares similarity between associated positions. Throws
// DegenerateError with fewer than three pairs or collinear positions.
Sim3Alignment AlignSim3(const Trajectory& est, const Trajectory& gt,
                        double tolerance = kAssociationTolerance);

// Sum of squared residuals of `transform` over the given position pairs.
double AlignmentObjective(const Similarity& transform,
                          const std::vector<Eigen::Vector3d>& est,
                          const std::vector<Eigen::Vector3d>& gt);

// RMSE of positions after Sim(3) alignment.
double AteRmse(const Trajectory& est, const Trajectory& gt,
               double tolerance = kAssociationTolerance);

// RMSE of positions after the rigid transform that maps the first
// associated estimated pose onto its ground-truth pose. Usable when the
// trajectory does not constrain a similarity, e.g. a static camera.
double FirstPoseAlignedRmse(const Trajectory& est, const Trajectory& gt,
                            double tolerance = kAssociationTolerance);

// Largest distance between two positions of a trajectory.
double TrajectoryExtent(const Trajectory& trajectory);

}  // namespace sprim
