#include "sprim/visual_odometry.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sprim/depth_completion.h"
#include "sprim/error.h"
#include "sprim/evaluation.h"

namespace sprim {

namespace {

constexpr double kRadToDeg = 180.0 / M_PI;

bool HasSignal(const Image& image) {
  for (float v : image.data()) {
    if (std::abs(v) > 1e-6f) return true;
  }
  return false;
}

void ReadPhotometric(const Config& config, const std::string& section,
                     PhotometricOptions* o) {
  const std::string p = section + ".";
  o->iterations = config.GetInt(p + "iterations", o->iterations);
  o->levels = config.GetInt(p + "levels", o->levels);
  o->pose_step = config.GetDouble(p + "pose_step", o->pose_step);
  o->scale_step = config.GetDouble(p + "scale_step", o->scale_step);
  o->scale_penalty = config.GetDouble(p + "scale_penalty", o->scale_penalty);
  o->min_valid_fraction =
      config.GetDouble(p + "min_valid_fraction", o->min_valid_fraction);
  o->charbonnier_eps = config.GetDouble(p + "charbonnier_eps", o->charbonnier_eps);
  o->lr_decay = config.GetDouble(p + "lr_decay", o->lr_decay);
  const std::string loss = config.GetString(
      p + "loss", o->loss == RobustLoss::kL1 ? "l1" : "charbonnier");
  if (loss == "l1") {
    o->loss = RobustLoss::kL1;
  } else if (loss == "charbonnier") {
    o->loss = RobustLoss::kCharbonnier;
  } else {
    throw FormatError("config: " + p + "loss must be l1 or charbonnier");
  }
}

}  // namespace

VoOptions::VoOptions() {
  tracking.iterations = 100;
  mapping.iterations = 100;
  mapping.normalization = CostNormalization::kSum;
}

VoOptions VoOptionsFromConfig(const Config& config) {
  VoOptions o;
  o.window_size = config.GetInt("vo.window_size", o.window_size);
  o.max_supplementary = config.GetInt("vo.max_supplementary", o.max_supplementary);
  o.keyframe_displacement_px =
      config.GetDouble("vo.keyframe_displacement_px", o.keyframe_displacement_px);
  o.keyframe_rotation_deg =
      config.GetDouble("vo.keyframe_rotation_deg", o.keyframe_rotation_deg);
  o.keyframe_max_interval =
      config.GetInt("vo.keyframe_max_interval", o.keyframe_max_interval);
  o.lost_cost = config.GetDouble("vo.lost_cost", o.lost_cost);
  o.lost_active_fraction =
      config.GetDouble("vo.lost_active_fraction", o.lost_active_fraction);
  o.working_width = config.GetInt("vo.working_width", o.working_width);
  o.working_height = config.GetInt("vo.working_height", o.working_height);
  o.fix_oldest_scales = config.GetBool("vo.fix_oldest_scales", o.fix_oldest_scales);
  const std::string mode = config.GetString("vo.mode", "full");
  if (mode == "full") {
    o.mode = IntegrationMode::kFull;
  } else if (mode == "const-depth") {
    o.mode = IntegrationMode::kConstantDepth;
  } else if (mode == "const-normal") {
    o.mode = IntegrationMode::kConstantNormal;
  } else {
    throw FormatError("config: vo.mode must be full, const-depth or const-normal");
  }
  ReadPhotometric(config, "init", &o.initialization);
  ReadPhotometric(config, "tracking", &o.tracking);
  ReadPhotometric(config, "mapping", &o.mapping);
  o.integration.clamp_ratio =
      config.GetDouble("integration.clamp_ratio", o.integration.clamp_ratio);
  o.integration.cg_tol = config.GetDouble("integration.cg_tol", o.integration.cg_tol);
  o.integration.cg_maxiter =
      config.GetInt("integration.cg_maxiter", o.integration.cg_maxiter);
  const std::set<std::string> unused = config.UnusedKeys();
  if (!unused.empty()) {
    throw FormatError("config: unknown key " + *unused.begin());
  }
  if (o.window_size < 2) throw FormatError("config: vo.window_size must be >= 2");
  if (o.max_supplementary < 0) {
    throw FormatError("config: vo.max_supplementary must be >= 0");
  }
  if (o.working_width < 8 || o.working_height < 8) {
    throw FormatError("config: working resolution too small");
  }
  return o;
}

PointCloud Keyframe::Cloud() const {
  return Fuse(primitives, bundle.intr, pose, &bundle.image);
}

VisualOdometry::VisualOdometry(const VoOptions& options) : options_(options) {}

FrameBundle VisualOdometry::Prepare(const FrameBundle& bundle) const {
  int levels = 0;
  while ((bundle.intr.width >> levels) > options_.working_width ||
         (bundle.intr.height >> levels) > options_.working_height) {
    ++levels;
  }
  if (levels == 0) return bundle;
  return DownsampleBundle(bundle, levels);
}

Keyframe VisualOdometry::MakeKeyframe(const FrameBundle& bundle,
                                      const Pose& pose) const {
  Keyframe kf;
  kf.id = next_keyframe_id_;
  kf.frame_index = frame_count_;
  kf.timestamp = bundle.timestamp;
  kf.bundle = bundle;
  kf.pose = pose;
  kf.primitives = UnitScalePrimitives(IntegrateBatch(
      bundle.segments, bundle.normals, bundle.intr, options_.integration,
      options_.mode));
  if (kf.primitives.empty()) {
    throw DegenerateError("keyframe has no usable primitives");
  }
  return kf;
}

Keyframe VisualOdometry::SpawnKeyframe(const FrameBundle& bundle,
                                       const Pose& camera_to_world) const {
  if (window_.empty()) throw DomainError("spawn keyframe: empty window");
  Keyframe kf = MakeKeyframe(bundle, camera_to_world);
  const DepthMap rendered =
      RenderDepth(window_.back().Cloud(), bundle.intr, camera_to_world);
  std::vector<DepthSample> samples;
  for (int v = 0; v < bundle.intr.height; ++v) {
    for (int u = 0; u < bundle.intr.width; ++u) {
      if (rendered.Defined(u, v)) {
        samples.push_back({u, v, rendered.depth.at(u, v)});
      }
    }
  }
  std::vector<double> fitted;
  std::vector<char> supported(kf.primitives.size(), 0);
  for (std::size_t i = 0; i < kf.primitives.size(); ++i) {
    const std::optional<double> ls = FitScale(kf.primitives[i].prim, samples);
    if (!ls) continue;
    kf.primitives[i].log_scale = *ls;
    supported[i] = 1;
    fitted.push_back(*ls);
  }
  if (fitted.empty()) {
    throw DegenerateError("spawn keyframe: no overlap with previous geometry");
  }
  const double median = LowerMedian(fitted);
  for (std::size_t i = 0; i < kf.primitives.size(); ++i) {
    if (!supported[i]) kf.primitives[i].log_scale = median;
    kf.log_scale_init.push_back(kf.primitives[i].log_scale);
  }
  return kf;
}

void VisualOdometry::PushKeyframe(Keyframe keyframe) {
  next_keyframe_id_ = keyframe.id + 1;
  window_.push_back(std::move(keyframe));
  while (static_cast<int>(window_.size()) > options_.window_size) {
    retired_.push_back(std::move(window_.front()));
    window_.pop_front();
  }
  frames_since_keyframe_ = 0;
}

void VisualOdometry::Initialize(const FrameBundle& b0, const FrameBundle& b1) {
  if (!window_.empty()) throw DomainError("odometry already initialized");
  const FrameBundle f0 = Prepare(b0);
  const FrameBundle f1 = Prepare(b1);
  Keyframe kf0 = MakeKeyframe(f0, Pose::Identity());

  PhotometricProblem problem;
  problem.frames.push_back({f0.image, f0.intr, Pose::Identity(), true});
  problem.frames.push_back({f1.image, f1.intr, Pose::Identity(), false});
  PrimitiveSet set;
  set.frame = 0;
  set.primitives = kf0.primitives;
  problem.sets.push_back(std::move(set));
  problem.edges.push_back({0, 1});
  OptimizePhotometric(&problem, options_.initialization);
  kf0.primitives = problem.sets[0].primitives;
  for (const ScaledPrimitive& sp : kf0.primitives) {
    kf0.log_scale_init.push_back(sp.log_scale);
  }
  const Pose pose1 = problem.frames[1].pose;

  frames_.push_back({0, f0.timestamp, kf0.id, Pose(), f0.image, f0.intr, true});
  PushKeyframe(std::move(kf0));
  frame_count_ = 1;
  Keyframe kf1 = SpawnKeyframe(f1, pose1);
  frames_.push_back({1, f1.timestamp, kf1.id, Pose(), f1.image, f1.intr, true});
  PushKeyframe(std::move(kf1));
  frame_count_ = 2;
  MapWindow();
}

const Keyframe* VisualOdometry::FindKeyframe(int id) const {
  for (const Keyframe& kf : window_) {
    if (kf.id == id) return &kf;
  }
  for (const Keyframe& kf : retired_) {
    if (kf.id == id) return &kf;
  }
  return nullptr;
}

Trajectory VisualOdometry::CurrentTrajectory() const {
  Trajectory t;
  for (const TrackedFrame& f : frames_) {
    const Keyframe* kf = FindKeyframe(f.keyframe_id);
    t.Add(f.timestamp, kf->pose * f.relative);
  }
  return t;
}

TrackResult VisualOdometry::Track(const FrameBundle& bundle) const {
  if (window_.empty()) throw DomainError("track: odometry not initialized");
  const FrameBundle frame = Prepare(bundle);
  const Keyframe& kf = window_.back();
  TrackResult result;
  if (!HasSignal(frame.image)) {
    result.lost = true;
    result.reason = "no image signal";
    return result;
  }

  // Constant-velocity prediction from the two most recent frames.
  Pose predicted = kf.pose;
  if (frames_.size() >= 2) {
    const TrackedFrame& a = frames_[frames_.size() - 2];
    const TrackedFrame& b = frames_.back();
    const Pose pa = FindKeyframe(a.keyframe_id)->pose * a.relative;
    const Pose pb = FindKeyframe(b.keyframe_id)->pose * b.relative;
    predicted = pb * (pa.Inverse() * pb);
  } else if (!frames_.empty()) {
    const TrackedFrame& b = frames_.back();
    predicted = FindKeyframe(b.keyframe_id)->pose * b.relative;
  }

  PhotometricProblem problem;
  problem.frames.push_back({kf.bundle.image, kf.bundle.intr, kf.pose, true});
  problem.frames.push_back({frame.image, frame.intr, predicted, false});
  PrimitiveSet set;
  set.frame = 0;
  set.primitives = kf.primitives;
  set.scales_fixed = true;
  problem.sets.push_back(std::move(set));
  problem.edges.push_back({0, 1});
  PhotometricReport report;
  try {
    report = OptimizePhotometric(&problem, options_.tracking);
  } catch (const Error& e) {
    result.lost = true;
    result.reason = e.what();
    return result;
  }
  result.pose = problem.frames[1].pose;
  result.relative = kf.pose.Inverse() * result.pose;
  result.cost = report.final_cost;
  result.active_fraction =
      static_cast<double>(report.active) / static_cast<double>(kf.primitives.size());
  result.rotation_deg = RotationAngle(kf.pose, result.pose) * kRadToDeg;

  const Pose target_from_ref = result.pose.Inverse() * kf.pose;
  double displacement = 0.0;
  std::size_t count = 0;
  for (const ScaledPrimitive& sp : kf.primitives) {
    const WarpResult warp =
        WarpPrimitive(sp, target_from_ref, kf.bundle.intr, frame.intr);
    for (std::size_t k = 0; k < warp.coords.size(); ++k) {
      if (!warp.valid[k]) continue;
      const Pixel p = sp.prim.segment.pixels[k];
      displacement += (warp.coords[k] - Eigen::Vector2d(p.u, p.v)).norm();
      ++count;
    }
  }
  result.displacement_px = count > 0 ? displacement / count : 0.0;

  if (!std::isfinite(result.cost) || !result.pose.translation().allFinite()) {
    result.lost = true;
    result.reason = "non-finite tracking result";
  } else if (result.cost > options_.lost_cost) {
    result.lost = true;
    result.reason = "tracking cost too high";
  } else if (result.active_fraction < options_.lost_active_fraction) {
    result.lost = true;
    result.reason = "too few active primitives";
  }
  return result;
}

bool VisualOdometry::ShouldSpawn(const TrackResult& track) const {
  return track.displacement_px > options_.keyframe_displacement_px ||
         track.rotation_deg > options_.keyframe_rotation_deg ||
         frames_since_keyframe_ + 1 >= options_.keyframe_max_interval;
}

bool VisualOdometry::AddTrackedFrame(const FrameBundle& bundle,
                                     const TrackResult& track) {
  if (track.lost) throw DomainError("cannot add a lost frame");
  const FrameBundle frame = Prepare(bundle);
  const int index = frame_count_;
  bool spawned = false;
  if (ShouldSpawn(track)) {
    try {
      Keyframe kf = SpawnKeyframe(frame, track.pose);
      frames_.push_back({index, frame.timestamp, kf.id, Pose(), frame.image,
                         frame.intr, true});
      PushKeyframe(std::move(kf));
      spawned = true;
    } catch (const DegenerateError&) {
      spawned = false;
    }
  }
  if (!spawned) {
    frames_.push_back({index, frame.timestamp, window_.back().id,
                       track.relative, frame.image, frame.intr});
    ++frames_since_keyframe_;
  }
  ++frame_count_;
  if (spawned) MapWindow();
  return spawned;
}

std::vector<std::size_t> VisualOdometry::Supplementary(int keyframe_id) const {
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    if (frames_[i].keyframe_id == keyframe_id && !frames_[i].is_keyframe) {
      all.push_back(i);
    }
  }
  const auto m = static_cast<int>(all.size());
  const int want = options_.max_supplementary;
  if (m <= want) return all;
  std::vector<std::size_t> out;
  if (want == 1) {
    out.push_back(all.back());
    return out;
  }
  for (int k = 0; k < want; ++k) {
    const long idx = std::lround(static_cast<double>(k) * (m - 1) /
                                 static_cast<double>(want - 1));
    out.push_back(all[static_cast<std::size_t>(idx)]);
  }
  return out;
}

void VisualOdometry::MapWindow() {
  if (window_.size() < 2) {
    throw DomainError("mapping needs at least two keyframes");
  }
  const std::deque<Keyframe> window_backup = window_;
  const std::vector<TrackedFrame> frames_backup = frames_;
  try {
    PhotometricProblem problem;
    const auto n = static_cast<int>(window_.size());
    for (int k = 0; k < n; ++k) {
      const Keyframe& kf = window_[k];
      problem.frames.push_back(
          {kf.bundle.image, kf.bundle.intr, kf.pose, k == 0});
      PrimitiveSet set;
      set.frame = k;
      set.primitives = kf.primitives;
      set.log_scale_init = kf.log_scale_init;
      set.scales_fixed = k == 0 && options_.fix_oldest_scales;
      problem.sets.push_back(std::move(set));
    }
    std::vector<std::pair<std::size_t, int>> views;  // frame, problem index
    for (int k = 0; k < n; ++k) {
      if (k > 0) problem.edges.push_back({k, k - 1});
      if (k + 1 < n) problem.edges.push_back({k, k + 1});
      for (std::size_t f : Supplementary(window_[k].id)) {
        const auto idx = static_cast<int>(problem.frames.size());
        problem.frames.push_back({frames_[f].image, frames_[f].intr,
                                  window_[k].pose * frames_[f].relative, false});
        problem.edges.push_back({k, idx});
        views.emplace_back(f, idx);
      }
    }
    OptimizePhotometric(&problem, options_.mapping);
    for (int k = 0; k < n; ++k) {
      window_[k].pose = problem.frames[k].pose;
      window_[k].primitives = problem.sets[k].primitives;
    }
    for (const auto& [f, idx] : views) {
      const Keyframe* kf = FindKeyframe(frames_[f].keyframe_id);
      frames_[f].relative = kf->pose.Inverse() * problem.frames[idx].pose;
    }
  } catch (const Error&) {
    window_ = window_backup;
    frames_ = frames_backup;
    throw;
  }
}

VoResult RunVo(const std::vector<FrameBundle>& frames, const VoOptions& options) {
  if (frames.size() < 2) throw DomainError("odometry needs at least two frames");
  std::vector<FrameBundle> input = frames;
  bool increasing = true;
  for (std::size_t k = 1; k < input.size(); ++k) {
    if (!(input[k].timestamp > input[k - 1].timestamp)) increasing = false;
  }
  if (!increasing) {
    for (std::size_t k = 0; k < input.size(); ++k) {
      input[k].timestamp = static_cast<double>(k) / 30.0;
    }
  }

  VoResult result;
  VisualOdometry vo(options);
  auto window_ids = [&vo]() {
    std::vector<int> ids;
    for (const Keyframe& kf : vo.window()) ids.push_back(kf.id);
    return ids;
  };
  vo.Initialize(input[0], input[1]);
  for (int k = 0; k < 2; ++k) {
    FrameLog log;
    log.frame_index = k;
    log.timestamp = input[k].timestamp;
    log.keyframe = true;
    log.window = window_ids();
    log.note = k == 0 ? "initialization reference" : "initialization target";
    result.log.push_back(log);
  }
  for (std::size_t k = 2; k < input.size(); ++k) {
    FrameLog log;
    log.frame_index = static_cast<int>(k);
    log.timestamp = input[k].timestamp;
    const TrackResult track = vo.Track(input[k]);
    log.cost = track.cost;
    log.active_fraction = track.active_fraction;
    if (track.lost) {
      log.note = "tracking lost: " + track.reason;
      log.window = window_ids();
      result.log.push_back(log);
      result.lost = true;
      result.lost_frame = static_cast<int>(k);
      break;
    }
    try {
      log.keyframe = vo.AddTrackedFrame(input[k], track);
    } catch (const DegenerateError& e) {
      log.keyframe = true;
      log.note = std::string("mapping skipped: ") + e.what();
    }
    log.window = window_ids();
    result.log.push_back(log);
  }
  result.trajectory = vo.CurrentTrajectory();
  result.keyframes = vo.retired();
  for (const Keyframe& kf : vo.window()) result.keyframes.push_back(kf);
  return result;
}

std::string FormatVoLog(const VoResult& result) {
  std::ostringstream out;
  char buf[160];
  for (const FrameLog& log : result.log) {
    std::snprintf(buf, sizeof(buf), "frame %d t=%.6f cost=%.6f active=%.3f kf=%d window=",
                  log.frame_index, log.timestamp, log.cost, log.active_fraction,
                  log.keyframe ? 1 : 0);
    out << buf;
    for (std::size_t i = 0; i < log.window.size(); ++i) {
      out << (i ? "," : "") << log.window[i];
    }
    if (!log.note.empty()) out << " " << log.note;
    out << "\n";
  }
  if (result.lost) out << "lost at frame " << result.lost_frame << "\n";
  return out.str();
}

}  // namespace sprim
