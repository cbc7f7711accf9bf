#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "sprim/bundle.h"
#include "sprim/error.h"
#include "sprim/segment.h"
#include "sprim/synthetic_scene.h"
#include "test_util.h"

namespace sprim {
namespace {

using testing::TempDir;

std::vector<Pixel> Block(int u0, int v0, int w, int h) {
  std::vector<Pixel> out;
  for (int v = v0; v < v0 + h; ++v) {
    for (int u = u0; u < u0 + w; ++u) out.push_back({u, v});
  }
  return out;
}

// Flood fill over a pixel set; returns the component sizes.
std::vector<std::size_t> FloodFillSizes(const std::vector<Pixel>& pixels) {
  std::set<Pixel> remaining(pixels.begin(), pixels.end());
  std::vector<std::size_t> sizes;
  while (!remaining.empty()) {
    std::queue<Pixel> q;
    q.push(*remaining.begin());
    remaining.erase(remaining.begin());
    std::size_t n = 0;
    while (!q.empty()) {
      const Pixel p = q.front();
      q.pop();
      ++n;
      for (const Pixel d : {Pixel{1, 0}, Pixel{-1, 0}, Pixel{0, 1}, Pixel{0, -1}}) {
        auto it = remaining.find({p.u + d.u, p.v + d.v});
        if (it != remaining.end()) {
          q.push(*it);
          remaining.erase(it);
        }
      }
    }
    sizes.push_back(n);
  }
  std::sort(sizes.begin(), sizes.end());
  return sizes;
}

TEST(SelectMasks, SmallestStableMaskWins) {
  QueryCandidates q;
  q.query = {5, 5};
  q.candidates = {{Block(0, 0, 20, 20), 0.95, 0.9},
                  {Block(0, 0, 10, 10), 0.95, 0.8},
                  {Block(0, 0, 50, 50), 0.95, 0.7}};
  const std::vector<Segment> s = SelectMasks(std::vector<QueryCandidates>{q});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].area(), 100u);
  EXPECT_EQ(s[0].anchor, (Pixel{5, 5}));
}

TEST(SelectMasks, UnstableQueryIsDiscarded) {
  QueryCandidates q;
  q.query = {1, 1};
  q.candidates = {{Block(0, 0, 4, 4), 0.5, 1.0}, {Block(0, 0, 8, 8), 0.89, 1.0}};
  EXPECT_TRUE(SelectMasks(std::vector<QueryCandidates>{q}).empty());
}

TEST(SelectMasks, DuplicateMasksAreSuppressed) {
  QueryCandidates a;
  a.query = {2, 2};
  a.candidates = {{Block(0, 0, 10, 10), 0.95, 1.0}};
  QueryCandidates b = a;
  b.query = {3, 3};
  ASSERT_GT(MaskIoU(a.candidates[0].pixels, b.candidates[0].pixels), 0.7);
  EXPECT_EQ(SelectMasks(std::vector<QueryCandidates>{a, b}).size(), 1u);
}

TEST(SelectMasks, EqualAreasResolveToLowestCandidateIndex) {
  QueryCandidates q;
  q.query = {0, 0};
  q.candidates = {{Block(0, 0, 5, 4), 0.95, 1.0}, {Block(0, 0, 4, 5), 0.95, 1.0}};
  const std::vector<Segment> s = SelectMasks(std::vector<QueryCandidates>{q});
  ASSERT_EQ(s.size(), 1u);
  std::vector<Pixel> expected = Block(0, 0, 5, 4);
  Canonicalize(&expected);
  EXPECT_EQ(s[0].pixels, expected);
}

TEST(SelectMasks, InvariantToCandidateOrder) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pos(0, 30);
  std::uniform_int_distribution<int> size(3, 15);
  std::uniform_real_distribution<double> stab(0.85, 1.0);
  std::vector<QueryCandidates> queries;
  for (int q = 0; q < 8; ++q) {
    QueryCandidates qc;
    qc.query = {pos(rng), pos(rng)};
    for (int c = 0; c < 3; ++c) {
      const int w = size(rng);
      const int h = size(rng);
      qc.candidates.push_back(
          {Block(qc.query.u - w / 2, qc.query.v - h / 2, w, h), stab(rng), 1.0});
    }
    queries.push_back(qc);
  }
  const std::vector<Segment> base = SelectMasks(queries);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<QueryCandidates> shuffled = queries;
    for (QueryCandidates& qc : shuffled) {
      std::shuffle(qc.candidates.begin(), qc.candidates.end(), rng);
    }
    EXPECT_EQ(SelectMasks(shuffled), base);
  }
}

TEST(SelectMasks, MaskIoUMatchesBruteForce) {
  const std::vector<Pixel> a = Block(0, 0, 10, 10);
  const std::vector<Pixel> b = Block(5, 0, 10, 10);
  EXPECT_DOUBLE_EQ(MaskIoU(a, b), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(MaskIoU(a, a), 1.0);
}

TEST(SampleQueries, InitialPhaseDrawsDistinctInBoundsPixels) {
  Intrinsics intr;
  intr.width = 64;
  intr.height = 48;
  intr.fu = intr.fv = 50.0;
  intr.cu = 31.5;
  intr.cv = 23.5;
  const std::vector<std::uint8_t> coverage(64 * 48, 0);
  const std::vector<Pixel> q = SampleQueries(intr, coverage, 3);
  ASSERT_EQ(q.size(), 300u);
  std::set<Pixel> distinct(q.begin(), q.end());
  EXPECT_EQ(distinct.size(), 300u);
  for (const Pixel& p : q) {
    EXPECT_GE(p.u, 0);
    EXPECT_LT(p.u, 64);
    EXPECT_GE(p.v, 0);
    EXPECT_LT(p.v, 48);
  }
  EXPECT_EQ(SampleQueries(intr, coverage, 3), q);
}

TEST(SampleQueries, UncoveredPhase) {
  Intrinsics intr;
  intr.width = 32;
  intr.height = 32;
  intr.fu = intr.fv = 30.0;
  intr.cu = intr.cv = 15.5;
  std::vector<std::uint8_t> coverage(32 * 32, 1);
  EXPECT_TRUE(SampleQueries(intr, coverage, 1).empty());
  for (int k = 0; k < 40; ++k) coverage[k] = 0;
  const std::vector<Pixel> q = SampleQueries(intr, coverage, 1);
  EXPECT_EQ(q.size(), 40u);
  for (const Pixel& p : q) EXPECT_EQ(coverage[p.v * 32 + p.u], 0);
  std::fill(coverage.begin(), coverage.end(), 0);
  coverage[0] = 1;
  EXPECT_EQ(SampleQueries(intr, coverage, 1).size(), 100u);
}

TEST(SplitConnected, TwoBlobs) {
  Segment s;
  s.pixels = Block(0, 0, 5, 5);
  const std::vector<Pixel> other = Block(10, 10, 5, 5);
  s.pixels.insert(s.pixels.end(), other.begin(), other.end());
  Canonicalize(&s.pixels);
  s.anchor = {12, 12};
  const std::vector<Segment> parts = SplitConnected(s, 16);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].area(), 25u);
  EXPECT_EQ(parts[1].area(), 25u);
  int with_anchor = 0;
  for (const Segment& p : parts) {
    EXPECT_TRUE(p.Contains(p.anchor));
    with_anchor += p.anchor == Pixel{12, 12};
  }
  EXPECT_EQ(with_anchor, 1);
  const Segment& moved = parts[0].Contains({12, 12}) ? parts[1] : parts[0];
  EXPECT_EQ(moved.anchor, (Pixel{2, 2}));
}

TEST(SplitConnected, ConnectedBlobUnchanged) {
  Segment s;
  s.pixels = Block(3, 4, 6, 7);
  Canonicalize(&s.pixels);
  s.anchor = {5, 5};
  const std::vector<Segment> parts = SplitConnected(s, 16);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0], s);
}

TEST(SplitConnected, SmallComponentDropped) {
  Segment s;
  s.pixels = Block(0, 0, 2, 2);
  Canonicalize(&s.pixels);
  s.anchor = {0, 0};
  EXPECT_TRUE(SplitConnected(s, 16).empty());
}

TEST(SplitConnected, OutputsAreFourConnectedComponents) {
  std::mt19937_64 rng(12);
  std::bernoulli_distribution on(0.55);
  for (int trial = 0; trial < 20; ++trial) {
    Segment s;
    for (int v = 0; v < 20; ++v) {
      for (int u = 0; u < 20; ++u) {
        if (on(rng)) s.pixels.push_back({u, v});
      }
    }
    s.anchor = s.pixels.front();
    const std::vector<std::size_t> sizes = FloodFillSizes(s.pixels);
    std::size_t expected = 0;
    for (std::size_t n : sizes) expected += n >= 4 ? 1 : 0;
    const std::vector<Segment> parts = SplitConnected(s, 4);
    EXPECT_EQ(parts.size(), expected);
    for (const Segment& p : parts) {
      EXPECT_TRUE(IsFourConnected(p.pixels));
      EXPECT_EQ(FloodFillSizes(p.pixels).size(), 1u);
      EXPECT_TRUE(p.Contains(p.anchor));
    }
  }
}

TEST(Segment, DiagonalPixelsAreNotFourConnected) {
  EXPECT_FALSE(IsFourConnected(std::vector<Pixel>{{0, 0}, {1, 1}}));
  EXPECT_TRUE(IsFourConnected(std::vector<Pixel>{{0, 0}, {1, 0}, {1, 1}}));
}

FrameBundle SmallBundle() {
  SceneSpec spec = MakeSphereScene(MakeIntrinsics(40, 30, 70.0));
  spec.trajectory = {Pose()};
  spec.min_segment_area = 4;
  return SynthesizeScene(spec, 5).frames.front();
}

TEST(Bundle, SaveLoadRoundTripIsBitExact) {
  TempDir dir("bundle");
  FrameBundle b = SmallBundle();
  b.timestamp = 1.25;
  SaveBundle(b, dir.path());
  const FrameBundle back = LoadBundle(dir.path());
  EXPECT_EQ(back.image, b.image);
  EXPECT_EQ(back.normals, b.normals);
  EXPECT_EQ(back.segments, b.segments);
  ASSERT_TRUE(back.gt_depth.has_value());
  EXPECT_EQ(*back.gt_depth, *b.gt_depth);
  ASSERT_TRUE(back.gt_pose.has_value());
  EXPECT_LT((back.gt_pose->Matrix() - b.gt_pose->Matrix()).norm(), 1e-6);
  EXPECT_DOUBLE_EQ(back.timestamp, 1.25);
  EXPECT_EQ(back.intr.width, b.intr.width);
}

TEST(Bundle, TruncatedNormalsRejected) {
  TempDir dir("trunc");
  SaveBundle(SmallBundle(), dir.path());
  std::filesystem::resize_file(dir / "normals.f32", 100);
  EXPECT_THROW(LoadBundle(dir.path()), FormatError);
}

TEST(Bundle, SegmentIndexOutOfRangeRejected) {
  TempDir dir("segidx");
  FrameBundle b = SmallBundle();
  SaveBundle(b, dir.path());
  std::ofstream out(dir / "segments.bin", std::ios::binary | std::ios::trunc);
  const std::uint32_t header[] = {1, 0, 0, 1, 40 * 30};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.close();
  EXPECT_THROW(LoadBundle(dir.path()), FormatError);
}

TEST(Bundle, NonUnitNormalRejected) {
  FrameBundle b = SmallBundle();
  b.normals.at(3, 3, 2) *= 1.1f;
  EXPECT_THROW(b.Validate(), FormatError);
}

TEST(Bundle, MissingDirectoryRejected) {
  EXPECT_THROW(LoadBundle("/nonexistent/sprim/bundle"), FormatError);
}

TEST(Bundle, MaskCandidatesRoundTrip) {
  TempDir dir("masks");
  QueryCandidates q;
  q.query = {2, 3};
  q.candidates = {{Block(0, 0, 4, 4), 0.9f, 0.5f}, {Block(1, 1, 2, 2), 0.95f, 0.25f}};
  for (auto& c : q.candidates) Canonicalize(&c.pixels);
  WriteMaskCandidates(dir / "masks.bin", std::vector<QueryCandidates>{q}, 10);
  const std::vector<QueryCandidates> back = ReadMaskCandidates(dir / "masks.bin", 10, 10);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].query, q.query);
  ASSERT_EQ(back[0].candidates.size(), 2u);
  EXPECT_EQ(back[0].candidates[1].pixels, q.candidates[1].pixels);
  EXPECT_FLOAT_EQ(static_cast<float>(back[0].candidates[1].stability), 0.95f);
}

TEST(Bundle, DownsampleKeepsUnitNormalsAndSegments) {
  const FrameBundle b = SmallBundle();
  const FrameBundle d = DownsampleBundle(b, 1);
  EXPECT_EQ(d.intr.width, 20);
  EXPECT_EQ(d.image.width(), 20);
  EXPECT_NO_THROW(d.Validate());
  EXPECT_FALSE(d.segments.empty());
}

TEST(Synth, FrontoParallelPlane) {
  const Intrinsics intr = MakeIntrinsics(64, 48, 60.0);
  SceneSpec spec = MakePlaneScene(intr, 2.0);
  const FrameBundle b = SynthesizeScene(spec, 1).frames.front();
  for (int v = 0; v < 48; ++v) {
    for (int u = 0; u < 64; ++u) {
      EXPECT_NEAR(b.gt_depth->at(u, v), 2.0f, 1e-6);
      EXPECT_NEAR(b.normals.at(u, v, 0), 0.0f, 1e-7);
      EXPECT_NEAR(b.normals.at(u, v, 1), 0.0f, 1e-7);
      EXPECT_NEAR(b.normals.at(u, v, 2), -1.0f, 1e-7);
    }
  }
}

TEST(Synth, SphereOnOpticalAxis) {
  const Intrinsics intr = MakeIntrinsics(65, 49, 60.0);
  const FrameBundle b = SynthesizeScene(MakeSphereScene(intr), 1).frames.front();
  const int u = static_cast<int>(intr.cu);
  const int v = static_cast<int>(intr.cv);
  EXPECT_NEAR(b.gt_depth->at(u, v), 2.0f, 1e-6);
  EXPECT_NEAR(b.normals.at(u, v, 2), -1.0f, 1e-6);
}

TEST(Synth, SameSeedSameBundles) {
  SceneOptions o;
  o.frames = 3;
  const SyntheticSequence a = SynthesizeScene(MakeOrbitScene(4, o), 4);
  const SyntheticSequence b = SynthesizeScene(MakeOrbitScene(4, o), 4);
  ASSERT_EQ(a.frames.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.frames[k].image, b.frames[k].image);
    EXPECT_EQ(a.frames[k].normals, b.frames[k].normals);
    EXPECT_EQ(a.frames[k].segments, b.frames[k].segments);
  }
}

TEST(Synth, CameraInsideGeometryRejected) {
  SceneSpec spec = MakeSphereScene(MakeIntrinsics(32, 24, 60.0));
  spec.trajectory = {Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 3))};
  EXPECT_THROW(SynthesizeScene(spec, 0), DomainError);
}

TEST(Synth, NormalsAreUnitCameraFacingAndSegmentsConnected) {
  SceneOptions o;
  o.frames = 2;
  const SyntheticSequence seq = SynthesizeScene(MakeOrbitScene(2, o), 2);
  for (const FrameBundle& b : seq.frames) {
    EXPECT_NO_THROW(b.Validate());
    for (int v = 0; v < b.intr.height; ++v) {
      for (int u = 0; u < b.intr.width; ++u) {
        const Eigen::Vector3d n(b.normals.at(u, v, 0), b.normals.at(u, v, 1),
                                b.normals.at(u, v, 2));
        EXPECT_NEAR(n.norm(), 1.0, 1e-6);
        EXPECT_LE(n.dot(PixelRay(u, v, b.intr)), 1e-9);
      }
    }
    for (const Segment& s : b.segments) {
      EXPECT_TRUE(IsFourConnected(s.pixels));
      EXPECT_TRUE(s.Contains(s.anchor));
    }
  }
}

TEST(Synth, NormalsMatchAnalyticSurfaceNormalsInCameraFrame) {
  // Orbit cameras look at the room center; the back wall normal is -z in the
  // world, rotated into each camera frame.
  SceneOptions o;
  o.frames = 3;
  const SyntheticSequence seq = SynthesizeScene(MakeOrbitScene(6, o), 6);
  for (const FrameBundle& b : seq.frames) {
    const Eigen::Vector3d world_normal(0.0, 0.0, -1.0);
    const Eigen::Vector3d expected = b.gt_pose->rotation().transpose() * world_normal;
    int checked = 0;
    for (int v = 0; v < b.intr.height; ++v) {
      for (int u = 0; u < b.intr.width; ++u) {
        const double z = b.gt_depth->at(u, v);
        const Eigen::Vector3d x = *b.gt_pose * Unproject({u, v}, z, b.intr);
        if (std::abs(x.z() - 6.5) > 1e-4) continue;
        const Eigen::Vector3d n(b.normals.at(u, v, 0), b.normals.at(u, v, 1),
                                b.normals.at(u, v, 2));
        EXPECT_LT((n - expected).norm(), 1e-6);
        ++checked;
      }
    }
    EXPECT_GT(checked, 100);
  }
}

TEST(Synth, OracleIsPhotometricallyConsistent) {
  SceneOptions o;
  o.frames = 2;
  const SyntheticSequence seq = SynthesizeScene(MakeOrbitScene(3, o), 3);
  const FrameBundle& a = seq.frames[0];
  const FrameBundle& b = seq.frames[1];
  const Pose b_from_a = b.gt_pose->Inverse() * *a.gt_pose;
  std::vector<double> diffs;
  for (int v = 0; v < a.intr.height; ++v) {
    for (int u = 0; u < a.intr.width; ++u) {
      const Eigen::Vector3d xb = b_from_a * Unproject({u, v}, a.gt_depth->at(u, v), a.intr);
      if (xb.z() <= 0.0) continue;
      const Eigen::Vector2d uv = Project(xb, b.intr);
      const int ub = static_cast<int>(std::lround(uv.x()));
      const int vb = static_cast<int>(std::lround(uv.y()));
      if (ub < 0 || vb < 0 || ub >= b.intr.width || vb >= b.intr.height) continue;
      // Skip occlusions.
      if (std::abs(b.gt_depth->at(ub, vb) - xb.z()) > 1e-3) continue;
      if ((uv - Eigen::Vector2d(ub, vb)).norm() > 0.05) continue;
      diffs.push_back(std::abs(a.image.at(u, v, 0) - b.image.at(ub, vb, 0)));
    }
  }
  ASSERT_GT(diffs.size(), 20u);
  std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2, diffs.end());
  EXPECT_LT(diffs[diffs.size() / 2], 1e-3);
}

TEST(Synth, QuantizeTo8Bit) {
  EXPECT_FLOAT_EQ(QuantizeTo8Bit(0.0f), 0.0f);
  EXPECT_FLOAT_EQ(QuantizeTo8Bit(1.0f), 1.0f);
  EXPECT_FLOAT_EQ(QuantizeTo8Bit(0.5f), 128.0f / 255.0f);
}

}  // namespace
}  // namespace sprim
