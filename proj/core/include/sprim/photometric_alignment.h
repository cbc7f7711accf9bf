#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "sprim/camera.h"
#include "sprim/image.h"
#include "sprim/normal_integration.h"
#include "sprim/pose.h"

namespace sprim {

// A SuperPrimitive with its depth scale. Depth at pixel k is
// exp(log_scale + prim.log_udepth[k]).
struct ScaledPrimitive {
  SuperPrimitive prim;
  double log_scale = 0.0;

  double DepthAt(std::size_t k) const {
    return std::exp(log_scale + prim.log_udepth[k]);
  }
};

enum class RobustLoss { kL1, kCharbonnier };

// How the per-primitive residuals of one reference/target pair are combined.
enum class CostNormalization {
  kMeanPerEdge,  // mean over active primitives, summed over pairs
  kSum,          // plain sum over pairs and primitives
};

struct PhotometricOptions {
  RobustLoss loss = RobustLoss::kCharbonnier;
  double charbonnier_eps = 1e-3;
  double min_valid_fraction = 0.3;
  double scale_penalty = 1e-5;
  CostNormalization normalization = CostNormalization::kMeanPerEdge;
  // Points closer than this to the target camera plane are invalid.
  double min_depth = 1e-6;

  double pose_step = 1e-2;
  double scale_step = 1e-2;
  int iterations = 200;  // per pyramid level
  int levels = 3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Step size at the last iteration of a level, relative to the first.
  double lr_decay = 0.05;
  // Coarsest pyramid level keeps at least this many pixels per side.
  int min_level_size = 16;
};

// Target-image coordinates of every primitive pixel under the
// reference-to-target transform, with per-pixel validity.
struct WarpResult {
  std::vector<Eigen::Vector2d> coords;
  std::vector<char> valid;
};
WarpResult WarpPrimitive(const ScaledPrimitive& sp, const Pose& target_from_ref,
                         const Intrinsics& intr_ref,
                         const Intrinsics& intr_target,
                         double min_depth = 1e-6);

struct PrimitiveResidual {
  double value = 0.0;  // mean over valid pixels of the summed channel loss
  std::size_t valid = 0;
  std::size_t total = 0;
  bool active = false;
  double valid_fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(valid) / total;
  }
};
PrimitiveResidual ComputePrimitiveResidual(
    const ScaledPrimitive& sp, const Image& image_ref, const Image& image_target,
    const Pose& target_from_ref, const Intrinsics& intr_ref,
    const Intrinsics& intr_target, const PhotometricOptions& options = {});

// One camera of a multi-view problem.
struct PhotometricFrame {
  Image image;  // 3 channels
  Intrinsics intr;
  Pose pose;  // camera-to-world
  bool pose_fixed = false;
};

// Primitives living in one frame.
struct PrimitiveSet {
  int frame = 0;
  std::vector<ScaledPrimitive> primitives;
  // Penalty anchors; filled from the current scales when left empty.
  std::vector<double> log_scale_init;
  bool scales_fixed = false;
};

// Photometric constraint: primitives of `set` warped into frame `target`.
struct PhotometricEdge {
  int set = 0;
  int target = 0;
};

struct PhotometricProblem {
  std::vector<PhotometricFrame> frames;
  std::vector<PrimitiveSet> sets;
  std::vector<PhotometricEdge> edges;

  // Throws DomainError on inconsistent indices or shapes.
  void Validate() const;
};

// Variable values of a problem: world-to-camera poses and log-scales.
struct PhotometricState {
  std::vector<Pose> world_to_camera;
  std::vector<std::vector<double>> log_scales;
};

// Cost and gradient of a problem over an image pyramid. Pose parameters are
// left increments of world-to-camera transforms, i.e. perturbations in the
// camera frame; scale parameters are additive log-scale increments.
class PhotometricObjective {
 public:
  PhotometricObjective(const PhotometricProblem& problem,
                       const PhotometricOptions& options);

  int num_levels() const { return num_levels_; }
  int num_parameters() const { return num_parameters_; }
  // Parameter offset of a frame's pose, or -1 when fixed.
  int PoseOffset(int frame) const { return pose_offset_[frame]; }
  // Parameter offset of a set's first scale, or -1 when fixed.
  int ScaleOffset(int set) const { return scale_offset_[set]; }

  PhotometricState InitialState() const;
  PhotometricState Apply(const PhotometricState& state,
                         const Eigen::VectorXd& delta) const;

  struct Evaluation {
    double cost = 0.0;
    Eigen::VectorXd gradient;  // empty unless requested
    std::size_t active = 0;
    // [edge][primitive] residual details.
    std::vector<std::vector<PrimitiveResidual>> residuals;
  };
  // Throws DegenerateError when no primitive is active.
  Evaluation Evaluate(const PhotometricState& state, int level,
                      bool with_gradient) const;

 private:
  struct LevelPixel {
    Eigen::Vector3d ray;
    double udepth;  // exp(log_udepth)
    float color[3];
  };
  struct LevelPrimitive {
    std::vector<LevelPixel> pixels;
  };

  const PhotometricProblem& problem_;
  PhotometricOptions options_;
  int num_levels_ = 1;
  int num_parameters_ = 0;
  std::vector<int> pose_offset_;
  std::vector<int> scale_offset_;
  std::vector<std::vector<Image>> pyramids_;          // [frame][level]
  std::vector<std::vector<Intrinsics>> intrinsics_;   // [frame][level]
  std::vector<std::vector<std::vector<LevelPrimitive>>> levels_;  // [set][level][prim]
  std::vector<std::vector<double>> log_scale_init_;
};

struct PhotometricReport {
  double initial_cost = 0.0;  // finest level, at the initial state
  double final_cost = 0.0;    // finest level, at the returned state
  int iterations = 0;         // total over levels
  std::size_t active = 0;
  std::vector<std::vector<PrimitiveResidual>> residuals;  // [edge][primitive]
};

// Coarse-to-fine Adam minimization with a geometrically decaying step size.
// Each level returns the lowest-cost state it visited; the finest level
// starts from whichever of the warm start and the initial state is cheaper,
// so the final cost never exceeds the initial cost.
// Writes the optimized poses and scales back into the problem.
PhotometricReport OptimizePhotometric(PhotometricProblem* problem,
                                      const PhotometricOptions& options = {});

// Two-view and few-view joint estimation of depth scales and relative poses.
struct AlignmentTarget {
  Image image;
  Intrinsics intr;
  Pose target_from_ref;  // initial estimate
  bool pose_fixed = false;
};
struct AlignmentProblem {
  Image reference_image;
  Intrinsics reference_intr;
  std::vector<ScaledPrimitive> primitives;
  std::vector<AlignmentTarget> targets;
  PhotometricOptions options;
};
struct AlignmentResult {
  std::vector<double> log_scales;
  std::vector<Pose> target_from_ref;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  // Fraction of valid pixels per primitive, averaged over targets.
  std::vector<double> valid_fraction;
};
AlignmentResult Align(const AlignmentProblem& problem);

// Photometric cost of an alignment problem at its initial values.
double AlignmentCost(const AlignmentProblem& problem);

// Scaled primitives with unit initial scale for every usable primitive.
std::vector<ScaledPrimitive> UnitScalePrimitives(
    const std::vector<SuperPrimitive>& primitives);

}  // namespace sprim
