#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "sprim/depth_completion.h"
#include "sprim/error.h"
#include "sprim/evaluation.h"
#include "sprim/normal_integration.h"
#include "sprim/synthetic_scene.h"
#include "test_util.h"

namespace sprim {
namespace {

using testing::TempDir;

SuperPrimitive RowPrimitive(int v, int u0, std::vector<double> log_udepth) {
  SuperPrimitive p;
  for (std::size_t k = 0; k < log_udepth.size(); ++k) {
    p.segment.pixels.push_back({u0 + static_cast<int>(k), v});
  }
  p.segment.anchor = p.segment.pixels.front();
  p.log_udepth = std::move(log_udepth);
  return p;
}

DepthMap MapFrom(int w, int h, const std::vector<float>& values) {
  DepthMap m;
  m.depth = Image(w, h, 1);
  std::copy(values.begin(), values.end(), m.depth.data().begin());
  return m;
}

TEST(FitScale, LeastSquaresClosedForm) {
  const SuperPrimitive p = RowPrimitive(0, 0, {0.0, std::log(2.0), std::log(3.0)});
  const std::vector<DepthSample> samples = {{0, 0, 2.0}, {1, 0, 5.0}, {2, 0, 5.0}};
  // s = (1*2 + 2*5 + 3*5) / (1 + 4 + 9)
  const std::optional<double> ls = FitScale(p, samples);
  ASSERT_TRUE(ls.has_value());
  EXPECT_NEAR(*ls, std::log(27.0 / 14.0), 1e-12);
}

TEST(FitScale, MedianRatioUsesLowerMiddle) {
  const SuperPrimitive p = RowPrimitive(0, 0, {0.0, 0.0, 0.0, 0.0});
  const std::vector<DepthSample> samples = {
      {0, 0, 4.0}, {1, 0, 1.0}, {2, 0, 3.0}, {3, 0, 2.0}};
  const std::optional<double> ls = FitScale(p, samples, ScaleFit::kMedianRatio);
  ASSERT_TRUE(ls.has_value());
  EXPECT_NEAR(*ls, std::log(2.0), 1e-12);
}

TEST(FitScale, SamplesOffThePrimitiveAreIgnored) {
  const SuperPrimitive p = RowPrimitive(1, 2, {0.0, 0.1});
  EXPECT_FALSE(FitScale(p, std::vector<DepthSample>{{0, 0, 1.0}, {2, 0, 1.0}}).has_value());
  const std::optional<double> ls =
      FitScale(p, std::vector<DepthSample>{{0, 0, 9.0}, {2, 1, 1.5}});
  ASSERT_TRUE(ls.has_value());
  EXPECT_NEAR(*ls, std::log(1.5), 1e-12);
}

TEST(FitScale, ExactOnNoiseFreeScaledDepth) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lud(-0.3, 0.3);
  std::uniform_real_distribution<double> scale(-1.0, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> values(30);
    for (double& x : values) x = lud(rng);
    const SuperPrimitive p = RowPrimitive(0, 0, values);
    const double s = scale(rng);
    std::vector<DepthSample> samples;
    for (int k = 0; k < 30; k += 7) samples.push_back({k, 0, std::exp(s + values[k])});
    EXPECT_NEAR(*FitScale(p, samples), s, 1e-12);
    EXPECT_NEAR(*FitScale(p, samples, ScaleFit::kMedianRatio), s, 1e-12);
  }
}

TEST(Fuse, UnprojectsEveryPixel) {
  const Intrinsics intr = MakeIntrinsics(20, 10, 60.0);
  const ScaledPrimitive sp{RowPrimitive(4, 3, {0.0, 0.5}), std::log(2.0)};
  const Pose pose(ExpSO3(Eigen::Vector3d(0.1, -0.2, 0.3)), Eigen::Vector3d(1, 2, 3));
  const PointCloud cloud = Fuse(std::vector<ScaledPrimitive>{sp}, intr, pose);
  ASSERT_EQ(cloud.size(), 2u);
  EXPECT_TRUE(cloud.colors.empty());
  EXPECT_LT((cloud.points[0] - pose * Unproject({3, 4}, 2.0, intr)).norm(), 1e-12);
  EXPECT_LT((cloud.points[1] - pose * Unproject({4, 4}, 2.0 * std::exp(0.5), intr)).norm(),
            1e-12);
}

TEST(RenderDepth, AveragesPointsOnTheSamePixel) {
  const Intrinsics intr = MakeIntrinsics(8, 6, 60.0);
  PointCloud cloud;
  cloud.points.push_back(Unproject({2, 3}, 1.0, intr));
  cloud.points.push_back(Unproject({2, 3}, 2.0, intr));
  cloud.points.push_back(Unproject({5, 1}, 4.0, intr));
  cloud.points.push_back(Eigen::Vector3d(0, 0, -1));  // behind the camera
  const DepthMap m = RenderDepth(cloud, intr);
  EXPECT_FLOAT_EQ(m.depth.at(2, 3), 1.5f);
  EXPECT_FLOAT_EQ(m.depth.at(5, 1), 4.0f);
  EXPECT_EQ(m.CountDefined(), 2u);
  EXPECT_EQ(m.provenance[3 * 8 + 2], Provenance::kPrimitive);
  EXPECT_EQ(m.provenance[0], Provenance::kUndefined);
}

TEST(RenderDepth, FuseRenderRoundTripReproducesDepth) {
  const FrameBundle b =
      SynthesizeScene(MakeSphereScene(MakeIntrinsics(64, 48, 60.0)), 0).frames.front();
  std::vector<ScaledPrimitive> prims;
  for (const SuperPrimitive& p : IntegrateBatch(b.segments, b.normals, b.intr)) {
    const Pixel a = p.segment.anchor;
    prims.push_back({p, std::log(b.gt_depth->at(a.u, a.v))});
  }
  const Pose pose(ExpSO3(Eigen::Vector3d(0.0, 0.3, 0.0)), Eigen::Vector3d(0.5, 0, 0));
  const DepthMap m = RenderDepth(Fuse(prims, b.intr, pose), b.intr, pose);
  for (const ScaledPrimitive& sp : prims) {
    for (std::size_t k = 0; k < sp.prim.segment.pixels.size(); ++k) {
      const Pixel q = sp.prim.segment.pixels[k];
      EXPECT_NEAR(m.depth.at(q.u, q.v), sp.DepthAt(k), 1e-5 * sp.DepthAt(k));
    }
  }
}

TEST(FillGaps, InterpolatesAlongRows) {
  DepthMap m = MapFrom(5, 1, {1, 0, 0, 0, 5});
  FillGaps(&m);
  for (int u = 0; u < 5; ++u) EXPECT_FLOAT_EQ(m.depth.at(u, 0), u + 1.0f);
  EXPECT_EQ(m.provenance[0], Provenance::kPrimitive);
  EXPECT_EQ(m.provenance[2], Provenance::kInterpolated);
}

TEST(FillGaps, CornersPropagateInTwoPasses) {
  DepthMap m = MapFrom(3, 3, {1, 0, 3, 0, 0, 0, 1, 0, 3});
  FillGaps(&m);
  const std::vector<float> expected = {1, 2, 3, 1, 2, 3, 1, 2, 3};
  for (std::size_t k = 0; k < 9; ++k) EXPECT_FLOAT_EQ(m.depth.data()[k], expected[k]);
}

TEST(FillGaps, BeyondOutermostUsesNearestValue) {
  DepthMap m = MapFrom(4, 1, {0, 2, 0, 0});
  FillGaps(&m);
  for (int u = 0; u < 4; ++u) EXPECT_FLOAT_EQ(m.depth.at(u, 0), 2.0f);
}

TEST(FillGaps, DenseAndIdempotent) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution keep(0.05);
  std::uniform_real_distribution<float> depth(0.5f, 4.0f);
  std::vector<float> values(40 * 30, 0.0f);
  for (float& x : values) {
    if (keep(rng)) x = depth(rng);
  }
  DepthMap m = MapFrom(40, 30, values);
  FillGaps(&m);
  EXPECT_EQ(m.CountDefined(), 1200u);
  for (float x : m.depth.data()) {
    EXPECT_GE(x, 0.5f);
    EXPECT_LE(x, 4.0f);
  }
  const DepthMap once = m;
  FillGaps(&m);
  EXPECT_EQ(m.depth, once.depth);
  EXPECT_EQ(m.provenance, once.provenance);
}

TEST(FillGaps, EmptyMapIsDegenerate) {
  DepthMap m = MapFrom(3, 3, std::vector<float>(9, 0.0f));
  EXPECT_THROW(FillGaps(&m), DegenerateError);
}

TEST(SparseDepth, FileRoundTripAndComments) {
  TempDir dir("sparse");
  const std::vector<DepthSample> s = {{1, 2, 1.25}, {3, 4, 4.5}};
  WriteSparseDepth(dir / "s.txt", s);
  EXPECT_EQ(ReadSparseDepth(dir / "s.txt"), s);
  {
    std::ofstream out(dir / "c.txt");
    out << "# header\n\n5 6 2.0  # trailing\n";
  }
  EXPECT_EQ(ReadSparseDepth(dir / "c.txt"), (std::vector<DepthSample>{{5, 6, 2.0}}));
  {
    std::ofstream out(dir / "bad.txt");
    out << "1 2\n";
  }
  EXPECT_THROW(ReadSparseDepth(dir / "bad.txt"), FormatError);
  EXPECT_THROW(ReadSparseDepth(dir / "missing.txt"), FormatError);
}

TEST(SparseDepth, ValidationRejectsOutOfRange) {
  const Intrinsics intr = MakeIntrinsics(10, 10, 60.0);
  EXPECT_NO_THROW(ValidateSparseDepth(std::vector<DepthSample>{{0, 0, 1.0}}, intr));
  EXPECT_THROW(ValidateSparseDepth(std::vector<DepthSample>{{10, 0, 1.0}}, intr),
               DomainError);
  EXPECT_THROW(ValidateSparseDepth(std::vector<DepthSample>{{0, 0, 6.0}}, intr),
               DomainError);
  EXPECT_THROW(ValidateSparseDepth(std::vector<DepthSample>{{0, 0, 0.1}}, intr),
               DomainError);
}

TEST(SparseDepth, SamplingIsDeterministicDistinctAndInRange) {
  const FrameBundle b =
      SynthesizeScene(MakeSphereScene(MakeIntrinsics(64, 48, 60.0)), 0).frames.front();
  const std::vector<DepthSample> a = SampleSparseDepth(*b.gt_depth, 150, 9);
  EXPECT_EQ(a.size(), 150u);
  EXPECT_EQ(SampleSparseDepth(*b.gt_depth, 150, 9), a);
  EXPECT_NE(SampleSparseDepth(*b.gt_depth, 150, 10), a);
  std::vector<std::pair<int, int>> pixels;
  for (const DepthSample& s : a) {
    EXPECT_GE(s.depth, kMinValidDepth);
    EXPECT_LE(s.depth, kMaxValidDepth);
    EXPECT_FLOAT_EQ(static_cast<float>(s.depth), b.gt_depth->at(s.u, s.v));
    pixels.push_back({s.u, s.v});
  }
  std::sort(pixels.begin(), pixels.end());
  EXPECT_EQ(std::unique(pixels.begin(), pixels.end()), pixels.end());
}

TEST(Complete, ProvenancePartitionsTheImage) {
  SceneOptions o;
  o.frames = 1;
  o.width = 96;
  o.height = 72;
  const FrameBundle b = SynthesizeScene(MakeOrbitScene(1, o), 1).frames.front();
  const std::vector<SuperPrimitive> prims = IntegrateBatch(b.segments, b.normals, b.intr);
  const std::vector<DepthSample> samples = SampleSparseDepth(*b.gt_depth, 150, 1);
  const CompletionResult r = Complete(b, prims, samples);
  ASSERT_EQ(r.log_scales.size(), prims.size());
  const std::size_t n = 96 * 72;
  ASSERT_EQ(r.map.provenance.size(), n);
  EXPECT_EQ(r.map.CountDefined(), n);
  std::vector<char> covered(n, 0);
  for (const ScaledPrimitive& sp : r.retained) {
    for (const Pixel& p : sp.prim.segment.pixels) covered[p.v * 96 + p.u] = 1;
  }
  std::size_t measured = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const Provenance pv = r.map.provenance[k];
    EXPECT_NE(pv, Provenance::kUndefined);
    EXPECT_EQ(pv == Provenance::kPrimitive, covered[k] == 1) << k;
    measured += pv == Provenance::kMeasured;
  }
  for (const DepthSample& s : samples) {
    const std::size_t k = static_cast<std::size_t>(s.v) * 96 + s.u;
    if (r.map.provenance[k] == Provenance::kMeasured) {
      EXPECT_FLOAT_EQ(r.map.depth.at(s.u, s.v), static_cast<float>(s.depth));
    }
  }
  EXPECT_GT(measured, 0u);
  // Noise-free samples and normals reproduce the true depth on primitives.
  for (std::size_t k = 0; k < n; ++k) {
    if (r.map.provenance[k] != Provenance::kPrimitive) continue;
    const float truth = b.gt_depth->data()[k];
    EXPECT_NEAR(r.map.depth.data()[k], truth, 1e-2 * truth);
  }
}

TEST(Complete, NoSamplesIsDegenerate) {
  const FrameBundle b =
      SynthesizeScene(MakeSphereScene(MakeIntrinsics(32, 24, 60.0)), 0).frames.front();
  const std::vector<SuperPrimitive> prims = IntegrateBatch(b.segments, b.normals, b.intr);
  EXPECT_THROW(Complete(b, prims, std::vector<DepthSample>{}), DegenerateError);
}

}  // namespace
}  // namespace sprim
