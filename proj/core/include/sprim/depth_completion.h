#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sprim/bundle.h"
#include "sprim/camera.h"
#include "sprim/image.h"
#include "sprim/normal_integration.h"
#include "sprim/photometric_alignment.h"
#include "sprim/point_cloud.h"
#include "sprim/pose.h"

namespace sprim {

struct DepthSample {
  int u = 0;
  int v = 0;
  double depth = 0.0;  // meters
  friend bool operator==(const DepthSample&, const DepthSample&) = default;
};

inline constexpr double kMinValidDepth = 0.2;
inline constexpr double kMaxValidDepth = 5.0;

// Throws DomainError for samples outside the image or the depth range.
void ValidateSparseDepth(std::span<const DepthSample> samples,
                         const Intrinsics& intr, double d_min = kMinValidDepth,
                         double d_max = kMaxValidDepth);
// Text format: one "u v depth" line per sample; '#' starts a comment.
std::vector<DepthSample> ReadSparseDepth(const std::string& path);
void WriteSparseDepth(const std::string& path,
                      std::span<const DepthSample> samples);
// `count` distinct pixels drawn uniformly among those whose depth lies in
// [d_min, d_max].
std::vector<DepthSample> SampleSparseDepth(const Image& depth, int count,
                                           std::uint64_t seed,
                                           double d_min = kMinValidDepth,
                                           double d_max = kMaxValidDepth);

enum class ScaleFit {
  kLeastSquares,  // s = sum(D * Dhat) / sum(D^2)
  kMedianRatio,   // median of log(Dhat) - log(D)
};

// Log-scale of a primitive from the samples falling on its pixels, or
// nullopt when none does.
std::optional<double> FitScale(const SuperPrimitive& primitive,
                               std::span<const DepthSample> samples,
                               ScaleFit fit = ScaleFit::kLeastSquares);

// Union of the unprojected primitive pixels, expressed in the world frame of
// `camera_to_world`. Colors are taken from `image` when given.
PointCloud Fuse(std::span<const ScaledPrimitive> primitives,
                const Intrinsics& intr, const Pose& camera_to_world = Pose(),
                const Image* image = nullptr);

enum class Provenance : std::uint8_t {
  kUndefined = 0,
  kPrimitive = 1,
  kMeasured = 2,
  kInterpolated = 3,
};

struct DepthMap {
  Image depth;  // 1 channel, <= 0 undefined
  std::vector<Provenance> provenance;

  bool Defined(int u, int v) const { return depth.at(u, v) > 0.0f; }
  std::size_t CountDefined() const;
};

// Projects each point to its nearest pixel and averages the depths landing
// on the same pixel. `camera_to_world` places the rendering camera in the
// cloud's frame.
DepthMap RenderDepth(const PointCloud& cloud, const Intrinsics& intr,
                     const Pose& camera_to_world = Pose());

// Fills undefined pixels by averaging horizontal and vertical linear
// interpolation between the nearest defined pixels (nearest value beyond the
// outermost ones), repeating until dense. Throws DegenerateError when nothing
// is defined.
void FillGaps(DepthMap* map);

struct CompletionOptions {
  ScaleFit fit = ScaleFit::kLeastSquares;
};

struct CompletionResult {
  DepthMap map;
  // Per input primitive; nullopt when discarded.
  std::vector<std::optional<double>> log_scales;
  std::vector<ScaledPrimitive> retained;
  PointCloud cloud;
};

// Fits, fuses and renders the primitives, writes measurements onto pixels no
// retained primitive covers, then fills the remaining gaps. Throws
// DegenerateError when every primitive is discarded.
CompletionResult Complete(const FrameBundle& bundle,
                          std::span<const SuperPrimitive> primitives,
                          std::span<const DepthSample> samples,
                          const CompletionOptions& options = {});

}  // namespace sprim
