#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "sprim/bundle.h"
#include "sprim/camera.h"
#include "sprim/pose.h"
#include "sprim/trajectory.h"

namespace sprim {

// Band-limited value noise painted in world coordinates, so every view of a
// surface point sees the same albedo. `contrast` scales the zero-mean noise
// around `base_albedo`; `wavelength` is the lattice spacing of the coarsest
// octave in scene units.
struct TextureSpec {
  Eigen::Vector3d base_albedo = Eigen::Vector3d::Constant(0.5);
  double contrast = 0.45;
  double wavelength = 0.3;
  int octaves = 2;
};

// Rectangle spanned by two orthonormal axes; normal = axis_u x axis_v.
struct QuadSurface {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d axis_v = Eigen::Vector3d::UnitY();
  double half_u = 1.0;
  double half_v = 1.0;
  TextureSpec texture;
};

struct SphereSurface {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
  TextureSpec texture;
};

// Oriented box; each face becomes its own segment.
struct BoxSurface {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Constant(0.5);
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  TextureSpec texture;
};

struct SceneSpec {
  Intrinsics intr;
  std::vector<QuadSurface> quads;
  std::vector<SphereSurface> spheres;
  std::vector<BoxSurface> boxes;
  std::vector<Pose> trajectory;  // camera-to-world, one per frame
  double frame_interval = 1.0 / 30.0;
  // When positive, surface segments are additionally cut along an image grid
  // of this cell size, mimicking an over-segmenting front-end.
  int segment_cell = 0;
  int min_segment_area = 64;
};

struct SyntheticSequence {
  std::vector<FrameBundle> frames;
  Trajectory groundtruth;
};

// Ray-casts every trajectory pose: pure-albedo color quantized to 8 bits,
// analytic camera-frame normals facing the camera, exact depth, per-surface
// segments and the exact pose. Pixels that see nothing get depth 0, black
// color and normal (0, 0, -1). Throws DomainError when a camera lies inside a
// sphere or box.
SyntheticSequence SynthesizeScene(const SceneSpec& spec, std::uint64_t seed);

FrameBundle RenderFrame(const SceneSpec& spec, const Pose& camera_to_world,
                        std::uint64_t seed, double timestamp = 0.0);

// Camera-to-world rotation looking from `eye` towards `target` with image y
// pointing along world +y as far as possible.
Pose LookAt(const Eigen::Vector3d& eye, const Eigen::Vector3d& target);

Intrinsics MakeIntrinsics(int width, int height, double hfov_deg);

// Uniformly scales geometry, texture wavelengths and trajectory translations.
SceneSpec ScaleScene(const SceneSpec& spec, double factor);

struct SceneOptions {
  int width = 160;
  int height = 120;
  double hfov_deg = 70.0;
  int frames = 30;
  // Grid cell for over-segmentation; 0 selects the scene's default.
  int segment_cell = 0;
};

// Single textured plane facing the camera at the given depth.
SceneSpec MakePlaneScene(const Intrinsics& intr, double depth);

// Unit sphere centered at (0, 0, 3) in front of a wall at depth 6.
SceneSpec MakeSphereScene(const Intrinsics& intr);

// Reference view at the origin plus `supporting_views` views displaced by
// `baseline_ratio` of the mean reference depth, all looking at the scene. The
// scene holds a textured wall, a sphere and a box at randomized positions.
SceneSpec MakeFewViewScene(std::uint64_t seed, int supporting_views,
                           const SceneOptions& options = {},
                           double baseline_ratio = 0.05);

// Closed room with furniture; the camera sweeps an arc around the room
// center while looking at it. Segments are cut along a 24 px grid by default.
SceneSpec MakeOrbitScene(std::uint64_t seed, const SceneOptions& options = {});

// Same room, camera never moves.
SceneSpec MakeStaticScene(std::uint64_t seed, const SceneOptions& options = {});

// Room dominated by two large spheres, camera on an arc; used to compare the
// full normal prior against flattened ablations. One segment per visible
// surface by default.
SceneSpec MakeCurvedScene(std::uint64_t seed, const SceneOptions& options = {});

// Mean of valid depths of a bundle's ground truth.
double MeanDepth(const FrameBundle& bundle);

}  // namespace sprim
