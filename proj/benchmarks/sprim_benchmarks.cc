#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sprim/depth_completion.h"
#include "sprim/normal_integration.h"
#include "sprim/photometric_alignment.h"
#include "sprim/synthetic_scene.h"

namespace sprim {
namespace {

const FrameBundle& OrbitFrame() {
  static const FrameBundle frame = [] {
    SceneSpec spec = MakeOrbitScene(0);
    spec.trajectory.resize(1);
    return SynthesizeScene(spec, 0).frames.front();
  }();
  return frame;
}

void BM_IntegrateBatch(benchmark::State& state) {
  const FrameBundle& b = OrbitFrame();
  std::size_t pixels = 0;
  for (const Segment& s : b.segments) pixels += s.area();
  for (auto _ : state) {
    benchmark::DoNotOptimize(IntegrateBatch(b.segments, b.normals, b.intr));
  }
  state.counters["segments"] = static_cast<double>(b.segments.size());
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(pixels));
}
BENCHMARK(BM_IntegrateBatch)->Unit(benchmark::kMillisecond);

void BM_PhotometricCostAndGradient(benchmark::State& state) {
  const SyntheticSequence seq = SynthesizeScene(MakeFewViewScene(0, 1), 0);
  PhotometricProblem problem;
  for (int k = 0; k < 2; ++k) {
    problem.frames.push_back(
        {seq.frames[k].image, seq.frames[k].intr, *seq.frames[k].gt_pose, k == 0});
  }
  PrimitiveSet set;
  const FrameBundle& ref = seq.frames[0];
  set.primitives = UnitScalePrimitives(IntegrateBatch(ref.segments, ref.normals, ref.intr));
  problem.sets.push_back(set);
  problem.edges.push_back({0, 1});
  PhotometricOptions options;
  options.levels = 1;
  const PhotometricObjective objective(problem, options);
  const PhotometricState x = objective.InitialState();
  const bool gradient = state.range(0) != 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(objective.Evaluate(x, 0, gradient));
  }
}
BENCHMARK(BM_PhotometricCostAndGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_RenderDepth(benchmark::State& state) {
  const FrameBundle& b = OrbitFrame();
  std::vector<ScaledPrimitive> prims =
      UnitScalePrimitives(IntegrateBatch(b.segments, b.normals, b.intr));
  const PointCloud cloud = Fuse(prims, b.intr);
  for (auto _ : state) {
    benchmark::DoNotOptimize(RenderDepth(cloud, b.intr));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(cloud.size()));
}
BENCHMARK(BM_RenderDepth)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace sprim

BENCHMARK_MAIN();
