#include "cli.h"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "sprim/bundle.h"
#include "sprim/config.h"
#include "sprim/depth_completion.h"
#include "sprim/error.h"
#include "sprim/evaluation.h"
#include "sprim/normal_integration.h"
#include "sprim/photometric_alignment.h"
#include "sprim/point_cloud.h"
#include "sprim/synthetic_scene.h"
#include "sprim/trajectory.h"
#include "sprim/visual_odometry.h"

namespace sprim {

namespace {

namespace fs = std::filesystem;

void RequireExists(const std::string& path) {
  if (!fs::exists(path)) throw FormatError("no such file or directory: " + path);
}

void EnsureDirectory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw FormatError("cannot create directory: " + dir);
  }
}

std::string Join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

IntegrationMode ParseMode(const std::string& mode) {
  if (mode == "full") return IntegrationMode::kFull;
  if (mode == "const-depth") return IntegrationMode::kConstantDepth;
  return IntegrationMode::kConstantNormal;
}

void WriteU32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string scene = "orbit";
  std::string out;
  std::uint64_t seed = 0;
  int frames = 30;
  int width = 160;
  int height = 120;
  int views = 1;
  int segment_cell = 0;
  int sparse = 0;
  double depth = 2.0;
};

int RunSynth(const SynthArgs& a, std::ostream& out) {
  SceneOptions options;
  options.width = a.width;
  options.height = a.height;
  options.frames = a.frames;
  options.segment_cell = a.segment_cell;
  SceneSpec spec;
  if (a.scene == "plane") {
    spec = MakePlaneScene(MakeIntrinsics(a.width, a.height, options.hfov_deg), a.depth);
  } else if (a.scene == "sphere") {
    spec = MakeSphereScene(MakeIntrinsics(a.width, a.height, options.hfov_deg));
  } else if (a.scene == "fewview") {
    spec = MakeFewViewScene(a.seed, a.views, options);
  } else if (a.scene == "orbit") {
    spec = MakeOrbitScene(a.seed, options);
  } else if (a.scene == "static") {
    spec = MakeStaticScene(a.seed, options);
  } else {
    spec = MakeCurvedScene(a.seed, options);
  }
  spec.segment_cell = a.segment_cell > 0 ? a.segment_cell : spec.segment_cell;
  const SyntheticSequence seq = SynthesizeScene(spec, a.seed);
  EnsureDirectory(a.out);
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu", k);
    const std::string dir = Join(a.out, name);
    SaveBundle(seq.frames[k], dir);
    if (a.sparse > 0) {
      const std::vector<DepthSample> samples =
          SampleSparseDepth(*seq.frames[k].gt_depth, a.sparse, a.seed + k);
      WriteSparseDepth(Join(dir, "sparse_depth.txt"), samples);
    }
  }
  WriteTumTrajectory(Join(a.out, "groundtruth.txt"), seq.groundtruth);
  out << "wrote " << seq.frames.size() << " frame(s) to " << a.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------ integrate

struct IntegrateArgs {
  std::string bundle;
  std::string out;
  std::string mode = "full";
  double cg_tol = 1e-8;
  int cg_maxiter = 0;
  std::uint64_t seed = 0;
};

int RunIntegrate(const IntegrateArgs& a, std::ostream& out) {
  RequireExists(a.bundle);
  const FrameBundle b = LoadBundle(a.bundle);
  IntegrationOptions options;
  options.cg_tol = a.cg_tol;
  options.cg_maxiter = a.cg_maxiter;
  const std::vector<SuperPrimitive> prims =
      IntegrateBatch(b.segments, b.normals, b.intr, options, ParseMode(a.mode));
  EnsureDirectory(a.out);
  WriteSegments(Join(a.out, "segments.bin"), b.segments, b.intr.width);
  const std::string path = Join(a.out, "log_udepth.bin");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write file: " + path);
  WriteU32(f, static_cast<std::uint32_t>(prims.size()));
  std::size_t failed = 0;
  for (const SuperPrimitive& p : prims) {
    WriteU32(f, static_cast<std::uint32_t>(p.status));
    WriteU32(f, static_cast<std::uint32_t>(p.log_udepth.size()));
    for (double v : p.log_udepth) {
      const float x = static_cast<float>(v);
      f.write(reinterpret_cast<const char*>(&x), sizeof(x));
    }
    if (!p.usable()) ++failed;
  }
  if (!f) throw FormatError("cannot write file: " + path);
  out << "integrated " << prims.size() << " segment(s), " << failed
      << " not converged\n";
  return kExitOk;
}

// ------------------------------------------------------------- complete

struct CompleteArgs {
  std::string bundle;
  std::string sparse;
  std::string out;
  std::string ply;
  std::string fit = "ls";
  std::string mode = "full";
  std::uint64_t seed = 0;
};

int RunComplete(const CompleteArgs& a, std::ostream& out) {
  RequireExists(a.bundle);
  const std::string sparse =
      a.sparse.empty() ? Join(a.bundle, "sparse_depth.txt") : a.sparse;
  RequireExists(sparse);
  const FrameBundle b = LoadBundle(a.bundle);
  const std::vector<DepthSample> samples = ReadSparseDepth(sparse);
  ValidateSparseDepth(samples, b.intr);
  const std::vector<SuperPrimitive> prims =
      IntegrateBatch(b.segments, b.normals, b.intr, {}, ParseMode(a.mode));
  CompletionOptions options;
  options.fit = a.fit == "median" ? ScaleFit::kMedianRatio : ScaleFit::kLeastSquares;
  const CompletionResult result = Complete(b, prims, samples, options);
  WriteFloatImage(a.out, result.map.depth);
  if (!a.ply.empty()) WritePly(a.ply, result.cloud);
  out << "retained " << result.retained.size() << " of " << prims.size()
      << " primitive(s)\n";
  if (b.gt_depth) {
    const DepthErrorReport r = DepthMetrics(result.map.depth, *b.gt_depth);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "mae_mm %.6f\nrmse_mm %.6f\n", r.mae, r.rmse);
    out << buf;
  }
  return kExitOk;
}

// ------------------------------------------------------------------ sfm

struct SfmArgs {
  std::string ref;
  std::vector<std::string> targets;
  std::string out;
  std::string mode = "full";
  int iterations = 200;
  int levels = 3;
  std::uint64_t seed = 0;
};

int RunSfm(const SfmArgs& a, std::ostream& out) {
  RequireExists(a.ref);
  for (const std::string& t : a.targets) RequireExists(t);
  const FrameBundle ref = LoadBundle(a.ref);
  AlignmentProblem problem;
  problem.reference_image = ref.image;
  problem.reference_intr = ref.intr;
  problem.primitives = UnitScalePrimitives(
      IntegrateBatch(ref.segments, ref.normals, ref.intr, {}, ParseMode(a.mode)));
  problem.options.iterations = a.iterations;
  problem.options.levels = a.levels;
  std::vector<double> timestamps{ref.timestamp};
  for (const std::string& t : a.targets) {
    const FrameBundle b = LoadBundle(t);
    problem.targets.push_back({b.image, b.intr, Pose(), false});
    timestamps.push_back(b.timestamp);
  }
  if (problem.primitives.empty()) {
    throw DegenerateError("sfm: reference has no usable primitives");
  }
  const AlignmentResult result = Align(problem);

  bool increasing = true;
  for (std::size_t k = 1; k < timestamps.size(); ++k) {
    if (!(timestamps[k] > timestamps[k - 1])) increasing = false;
  }
  Trajectory poses;
  poses.Add(increasing ? timestamps[0] : 0.0, Pose());
  for (std::size_t k = 0; k < result.target_from_ref.size(); ++k) {
    poses.Add(increasing ? timestamps[k + 1] : static_cast<double>(k + 1),
              result.target_from_ref[k].Inverse());
  }
  EnsureDirectory(a.out);
  WriteTumTrajectory(Join(a.out, "poses.txt"), poses);
  std::vector<ScaledPrimitive> scaled = problem.primitives;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    scaled[i].log_scale = result.log_scales[i];
  }
  const PointCloud cloud = Fuse(scaled, ref.intr, Pose(), &ref.image);
  WritePly(Join(a.out, "cloud.ply"), cloud);
  WriteFloatImage(Join(a.out, "depth.f32"), RenderDepth(cloud, ref.intr).depth);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "cost %.6f -> %.6f\n", result.initial_cost,
                result.final_cost);
  out << buf;
  return kExitOk;
}

// ------------------------------------------------------------------- vo

struct VoArgs {
  std::string frames;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

int RunVoCommand(const VoArgs& a, std::ostream& out, std::ostream& err) {
  RequireExists(a.frames);
  if (!a.config.empty()) RequireExists(a.config);
  const VoOptions options =
      a.config.empty() ? VoOptions() : VoOptionsFromConfig(Config::Load(a.config));
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(a.frames)) {
    if (entry.is_directory()) dirs.push_back(entry.path().string());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<FrameBundle> frames;
  for (const std::string& d : dirs) frames.push_back(LoadBundle(d));
  const VoResult result = RunVo(frames, options);

  EnsureDirectory(a.out);
  const std::string traj_path = Join(a.out, "trajectory.txt");
  WriteTumTrajectory(traj_path, result.trajectory);
  if (result.lost) {
    std::ofstream f(traj_path, std::ios::app);
    f << "# tracking lost at frame " << result.lost_frame << "\n";
  }
  for (const Keyframe& kf : result.keyframes) {
    WritePly(Join(a.out, "keyframe_" + std::to_string(kf.id) + ".ply"), kf.Cloud());
  }
  std::ofstream log(Join(a.out, "vo_log.txt"));
  log << FormatVoLog(result);
  out << "tracked " << result.trajectory.size() << " of " << frames.size()
      << " frame(s), " << result.keyframes.size() << " keyframe(s)\n";
  if (result.lost) {
    err << "error: tracking lost at frame " << result.lost_frame << "\n";
    return kExitData;
  }
  return kExitOk;
}

// ----------------------------------------------------------- eval-depth

struct EvalDepthArgs {
  std::string pred;
  std::string gt;
  std::string intr;
  double d_min = kMinValidDepth;
  double d_max = kMaxValidDepth;
  std::uint64_t seed = 0;
};

int RunEvalDepth(const EvalDepthArgs& a, std::ostream& out) {
  RequireExists(a.pred);
  RequireExists(a.gt);
  RequireExists(a.intr);
  const Intrinsics intr = ReadIntrinsics(a.intr);
  const Image pred = ReadFloatImage(a.pred, intr.width, intr.height, 1);
  const Image gt = ReadFloatImage(a.gt, intr.width, intr.height, 1);
  const DepthErrorReport r = DepthMetrics(pred, gt, a.d_min, a.d_max);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "mae_mm %.6f\nrmse_mm %.6f\nimae_1/km %.6f\nirmse_1/km %.6f\n",
                r.mae, r.rmse, r.imae, r.irmse);
  out << buf;
  return kExitOk;
}

// ------------------------------------------------------------- eval-ate

struct EvalAteArgs {
  std::string est;
  std::string gt;
  double tolerance = kAssociationTolerance;
  std::string align = "sim3";
  std::uint64_t seed = 0;
};

int RunEvalAte(const EvalAteArgs& a, std::ostream& out) {
  RequireExists(a.est);
  RequireExists(a.gt);
  const Trajectory est = ReadTumTrajectory(a.est);
  const Trajectory gt = ReadTumTrajectory(a.gt);
  const double ate = a.align == "first" ? FirstPoseAlignedRmse(est, gt, a.tolerance)
                                        : AteRmse(est, gt, a.tolerance);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "ATE %.6f\n", ate);
  out << buf;
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"SuperPrimitive depth, structure-from-motion and odometry tools",
               "sprim"};
  app.require_subcommand(1);

  const std::vector<std::string> modes{"full", "const-depth", "const-normal"};

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Render a synthetic oracle sequence");
  synth_cmd->add_option("--scene", synth.scene, "Scene family")
      ->check(CLI::IsMember({"plane", "sphere", "fewview", "orbit", "static", "curved"}))
      ->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--frames", synth.frames, "Frames of trajectory scenes")
      ->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--width", synth.width, "Image width")
      ->check(CLI::Range(8, 4096))->capture_default_str();
  synth_cmd->add_option("--height", synth.height, "Image height")
      ->check(CLI::Range(8, 4096))->capture_default_str();
  synth_cmd->add_option("--views", synth.views, "Supporting views of the fewview scene")
      ->check(CLI::Range(0, 64))->capture_default_str();
  synth_cmd->add_option("--segment-cell", synth.segment_cell,
                        "Additionally cut segments along a grid of this size")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--sparse", synth.sparse,
                        "Write this many depth samples per frame to sparse_depth.txt")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--depth", synth.depth, "Depth of the plane scene")
      ->check(CLI::PositiveNumber)->capture_default_str();

  IntegrateArgs integrate;
  CLI::App* integrate_cmd =
      app.add_subcommand("integrate", "Integrate segment normals into unscaled log-depth");
  integrate_cmd->add_option("--bundle", integrate.bundle, "Bundle directory")->required();
  integrate_cmd->add_option("--out", integrate.out, "Output directory")->required();
  integrate_cmd->add_option("--mode", integrate.mode, "Normal prior")
      ->check(CLI::IsMember(modes))->capture_default_str();
  integrate_cmd->add_option("--cg-tol", integrate.cg_tol, "Relative residual tolerance")
      ->check(CLI::PositiveNumber)->capture_default_str();
  integrate_cmd->add_option("--cg-maxiter", integrate.cg_maxiter,
                            "Iteration cap per segment (0: automatic)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  integrate_cmd->add_option("--seed", integrate.seed, "Random seed (unused, deterministic)");

  CompleteArgs complete;
  CLI::App* complete_cmd =
      app.add_subcommand("complete", "Complete sparse depth with scaled primitives");
  complete_cmd->add_option("--bundle", complete.bundle, "Bundle directory")->required();
  complete_cmd->add_option("--sparse", complete.sparse,
                           "Sparse depth text file [<bundle>/sparse_depth.txt]");
  complete_cmd->add_option("--out", complete.out, "Dense depth output (float32)")->required();
  complete_cmd->add_option("--ply", complete.ply, "Optional fused point cloud");
  complete_cmd->add_option("--fit", complete.fit, "Scale fit")
      ->check(CLI::IsMember({"ls", "median"}))->capture_default_str();
  complete_cmd->add_option("--mode", complete.mode, "Normal prior")
      ->check(CLI::IsMember(modes))->capture_default_str();
  complete_cmd->add_option("--seed", complete.seed, "Random seed (unused, deterministic)");

  SfmArgs sfm;
  CLI::App* sfm_cmd =
      app.add_subcommand("sfm", "Jointly estimate depth scales and relative poses");
  sfm_cmd->add_option("--ref", sfm.ref, "Reference bundle directory")->required();
  sfm_cmd->add_option("--targets", sfm.targets, "Target bundle directories")
      ->required()->expected(1, -1);
  sfm_cmd->add_option("--out", sfm.out, "Output directory")->required();
  sfm_cmd->add_option("--mode", sfm.mode, "Normal prior")
      ->check(CLI::IsMember(modes))->capture_default_str();
  sfm_cmd->add_option("--iterations", sfm.iterations, "Iterations per pyramid level")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sfm_cmd->add_option("--levels", sfm.levels, "Pyramid levels")
      ->check(CLI::Range(1, 8))->capture_default_str();
  sfm_cmd->add_option("--seed", sfm.seed, "Random seed (unused, deterministic)");

  VoArgs vo;
  CLI::App* vo_cmd = app.add_subcommand("vo", "Run monocular visual odometry");
  vo_cmd->add_option("--frames", vo.frames, "Directory of ordered bundle directories")
      ->required();
  vo_cmd->add_option("--config", vo.config, "key=value configuration file");
  vo_cmd->add_option("--out", vo.out, "Output directory")->required();
  vo_cmd->add_option("--seed", vo.seed, "Random seed (unused, deterministic)");

  EvalDepthArgs eval_depth;
  CLI::App* eval_depth_cmd =
      app.add_subcommand("eval-depth", "Depth error metrics of a prediction");
  eval_depth_cmd->add_option("--pred", eval_depth.pred, "Predicted depth (float32)")
      ->required();
  eval_depth_cmd->add_option("--gt", eval_depth.gt, "Ground-truth depth (float32)")
      ->required();
  eval_depth_cmd->add_option("--intr", eval_depth.intr, "intrinsics.txt giving the size")
      ->required();
  eval_depth_cmd->add_option("--min", eval_depth.d_min, "Minimum valid depth")
      ->capture_default_str();
  eval_depth_cmd->add_option("--max", eval_depth.d_max, "Maximum valid depth")
      ->capture_default_str();
  eval_depth_cmd->add_option("--seed", eval_depth.seed, "Random seed (unused, deterministic)");

  EvalAteArgs eval_ate;
  CLI::App* eval_ate_cmd =
      app.add_subcommand("eval-ate", "Absolute trajectory error of TUM trajectories");
  eval_ate_cmd->add_option("--est", eval_ate.est, "Estimated trajectory")->required();
  eval_ate_cmd->add_option("--gt", eval_ate.gt, "Ground-truth trajectory")->required();
  eval_ate_cmd->add_option("--tolerance", eval_ate.tolerance,
                           "Timestamp association tolerance in seconds")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  eval_ate_cmd->add_option("--align", eval_ate.align, "Alignment")
      ->check(CLI::IsMember({"sim3", "first"}))->capture_default_str();
  eval_ate_cmd->add_option("--seed", eval_ate.seed, "Random seed (unused, deterministic)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return RunSynth(synth, out);
    if (integrate_cmd->parsed()) return RunIntegrate(integrate, out);
    if (complete_cmd->parsed()) return RunComplete(complete, out);
    if (sfm_cmd->parsed()) return RunSfm(sfm, out);
    if (vo_cmd->parsed()) return RunVoCommand(vo, out, err);
    if (eval_depth_cmd->parsed()) return RunEvalDepth(eval_depth, out);
    if (eval_ate_cmd->parsed()) return RunEvalAte(eval_ate, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace sprim
