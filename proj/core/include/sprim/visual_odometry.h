#pragma once

#include <deque>
#include <string>
#include <vector>

#include "sprim/bundle.h"
#include "sprim/config.h"
#include "sprim/normal_integration.h"
#include "sprim/photometric_alignment.h"
#include "sprim/point_cloud.h"
#include "sprim/pose.h"
#include "sprim/trajectory.h"

namespace sprim {

struct VoOptions {
  PhotometricOptions initialization;
  PhotometricOptions tracking;
  PhotometricOptions mapping;
  IntegrationOptions integration;
  IntegrationMode mode = IntegrationMode::kFull;

  int window_size = 5;
  int max_supplementary = 4;
  // Keyframe trigger.
  double keyframe_displacement_px = 20.0;
  double keyframe_rotation_deg = 10.0;
  int keyframe_max_interval = 30;
  // Tracking is lost when the final cost exceeds lost_cost or fewer than
  // lost_active_fraction of the keyframe's primitives stay active.
  double lost_cost = 0.25;
  double lost_active_fraction = 0.5;
  // Input bundles are reduced by a power of two until they fit.
  int working_width = 160;
  int working_height = 120;
  // The oldest keyframe in the window keeps its pose (and optionally its
  // scales) fixed during mapping; while the run's first keyframe is in the
  // window it is that keyframe.
  bool fix_oldest_scales = false;

  VoOptions();
};

// Reads "section.key" entries: vo.*, tracking.*, mapping.*, init.*,
// integration.*; unknown keys raise FormatError.
VoOptions VoOptionsFromConfig(const Config& config);

struct Keyframe {
  int id = 0;
  int frame_index = 0;
  double timestamp = 0.0;
  FrameBundle bundle;  // working resolution
  Pose pose;           // camera-to-world
  std::vector<ScaledPrimitive> primitives;
  std::vector<double> log_scale_init;

  PointCloud Cloud() const;
};

// A non-keyframe frame tracked against a keyframe.
struct TrackedFrame {
  int frame_index = 0;
  double timestamp = 0.0;
  int keyframe_id = 0;
  Pose relative;  // keyframe camera-to-world inverse times frame pose
  Image image;
  Intrinsics intr;
  bool is_keyframe = false;
};

struct TrackResult {
  bool lost = false;
  std::string reason;
  Pose pose;      // camera-to-world
  Pose relative;  // with respect to the latest keyframe
  double cost = 0.0;
  double active_fraction = 0.0;
  double displacement_px = 0.0;
  double rotation_deg = 0.0;
};

struct FrameLog {
  int frame_index = 0;
  double timestamp = 0.0;
  double cost = 0.0;
  double active_fraction = 0.0;
  bool keyframe = false;
  std::vector<int> window;  // keyframe ids after processing the frame
  std::string note;
};

struct VoResult {
  Trajectory trajectory;  // one pose per processed frame
  std::vector<Keyframe> keyframes;  // every keyframe ever created, final state
  std::vector<FrameLog> log;
  bool lost = false;
  int lost_frame = -1;
};

class VisualOdometry {
 public:
  explicit VisualOdometry(const VoOptions& options);

  // Creates the first two keyframes from frames 0 and 1 by two-view
  // alignment with frame 0 fixed at the identity, then maps the window.
  void Initialize(const FrameBundle& b0, const FrameBundle& b1);

  // Pose-only alignment of a frame against the latest keyframe, started from
  // the constant-velocity prediction. Does not modify the odometry state.
  TrackResult Track(const FrameBundle& frame) const;

  // Records a tracked frame; spawns a keyframe and maps the window when the
  // trigger fires. Returns true when a keyframe was created.
  bool AddTrackedFrame(const FrameBundle& frame, const TrackResult& track);

  // Renders the latest keyframe's cloud into `bundle` seen from
  // `camera_to_world` and fits the new primitives' scales to it. Throws
  // DegenerateError when no primitive is supported.
  Keyframe SpawnKeyframe(const FrameBundle& bundle,
                         const Pose& camera_to_world) const;

  // Joint refinement of every keyframe in the window; restores the previous
  // state and rethrows when the problem is degenerate.
  void MapWindow();

  // Reduces an input bundle to the working resolution.
  FrameBundle Prepare(const FrameBundle& bundle) const;

  const std::deque<Keyframe>& window() const { return window_; }
  const std::vector<Keyframe>& retired() const { return retired_; }
  const std::vector<TrackedFrame>& frames() const { return frames_; }
  const VoOptions& options() const { return options_; }
  int frame_count() const { return frame_count_; }

  // World poses of every processed frame from the current keyframe poses.
  Trajectory CurrentTrajectory() const;

 private:
  Keyframe MakeKeyframe(const FrameBundle& bundle, const Pose& pose) const;
  const Keyframe* FindKeyframe(int id) const;
  // Indices into frames_ of the supplementary views of a keyframe.
  std::vector<std::size_t> Supplementary(int keyframe_id) const;
  bool ShouldSpawn(const TrackResult& track) const;
  void PushKeyframe(Keyframe keyframe);

  VoOptions options_;
  std::deque<Keyframe> window_;
  std::vector<Keyframe> retired_;
  std::vector<TrackedFrame> frames_;  // every processed frame, keyframes too
  int next_keyframe_id_ = 0;
  int frame_count_ = 0;
  int frames_since_keyframe_ = 0;
};

// Runs initialization, tracking, keyframe creation and mapping over a
// sequence. Stops at the first lost frame.
VoResult RunVo(const std::vector<FrameBundle>& frames, const VoOptions& options);

// Human-readable per-frame diagnostics, one line per frame.
std::string FormatVoLog(const VoResult& result);

}  // namespace sprim
