#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sprim/camera.h"
#include "sprim/image.h"
#include "sprim/segment.h"

namespace sprim {

enum class IntegrationMode { kFull, kConstantDepth, kConstantNormal };

enum class IntegrationStatus {
  kConverged = 0,
  kNotConverged = 1,
  // Constant-normal mode met a vanishing mean normal and used constant depth.
  kConstantDepthFallback = 2,
};

struct IntegrationOptions {
  // |n~| is clamped from below to clamp_ratio * focal length.
  double clamp_ratio = 1e-2;
  double cg_tol = 1e-8;
  // Per segment; <= 0 selects 10 * sqrt(unknowns) + 200.
  int cg_maxiter = 0;
};

// A segment with its unscaled log-depth, one value per segment pixel in the
// segment's row-major pixel order. The value at the anchor is exactly zero.
struct SuperPrimitive {
  Segment segment;
  std::vector<double> log_udepth;
  IntegrationStatus status = IntegrationStatus::kConverged;
  int iterations = 0;

  // Failed solves are excluded downstream.
  bool usable() const { return status != IntegrationStatus::kNotConverged; }
  double AtAnchor() const;
};

// One residual r = coeff * (z[j] - z[i]) + rhs along a 4-neighbor edge.
struct EdgeEquation {
  int i = 0;
  int j = 0;
  double coeff = 0.0;
  double rhs = 0.0;
};

// Least-squares form of the perspective log-depth PDE over one segment.
// Unknowns are indexed like Segment::pixels.
struct NormalSystem {
  std::size_t num_unknowns = 0;
  std::vector<EdgeEquation> equations;

  // Sum of squared residuals.
  double Functional(std::span<const double> z) const;
  Eigen::VectorXd Residuals(std::span<const double> z) const;
};

// Builds one equation per pair of 4-neighbors inside the segment, oriented
// in the +u or +v direction. Along an edge the normal is taken as the
// normalized mean of its endpoints and the tangent condition is integrated
// exactly for that normal, so planes are reproduced without discretization
// error. The coefficient is the perspective-corrected normal at the edge
// midpoint; when its magnitude falls below the clamp, or the endpoints see
// the surface from opposite sides, the linear form with a clamped
// coefficient is used instead.
NormalSystem Assemble(const Segment& segment, const Image& normals,
                      const Intrinsics& intr,
                      const IntegrationOptions& options = {});
NormalSystem Assemble(const Segment& segment,
                      std::span<const Eigen::Vector3d> pixel_normals,
                      const Intrinsics& intr,
                      const IntegrationOptions& options = {});

// Solves all segments as one block-diagonal system with Jacobi-preconditioned
// conjugate gradients. Every block keeps its own step sizes and stopping
// test, so a batch returns exactly what independent solves would.
std::vector<SuperPrimitive> IntegrateBatch(
    std::span<const Segment> segments, const Image& normals,
    const Intrinsics& intr, const IntegrationOptions& options = {},
    IntegrationMode mode = IntegrationMode::kFull);

SuperPrimitive FlattenConstantDepth(const SuperPrimitive& primitive);
// Replaces the segment's normals by their normalized mean, then integrates.
SuperPrimitive FlattenConstantNormal(const Segment& segment,
                                     const Image& normals,
                                     const Intrinsics& intr,
                                     const IntegrationOptions& options = {});

// Solves assembled systems directly (batched CG); exposed for testing.
struct SolveReport {
  std::vector<double> solution;
  bool converged = true;
  int iterations = 0;
};
std::vector<SolveReport> SolveBatch(std::span<const NormalSystem> systems,
                                    const IntegrationOptions& options = {});

}  // namespace sprim
