#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "sprim/error.h"
#include "sprim/evaluation.h"
#include "sprim/trajectory.h"
#include "test_util.h"

namespace sprim {
namespace {

using testing::TempDir;

Image DepthImage(const std::vector<float>& values) {
  Image img(static_cast<int>(values.size()), 1, 1);
  std::copy(values.begin(), values.end(), img.data().begin());
  return img;
}

Similarity RandomSimilarity(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> s(0.2, 5.0);
  const Pose p = testing::RandomPose(rng, 3.0, 4.0);
  Similarity t;
  t.scale = s(rng);
  t.rotation = p.rotation();
  t.translation = p.translation();
  return t;
}

Trajectory RandomTrajectory(std::mt19937_64& rng, int n) {
  Trajectory t;
  for (int k = 0; k < n; ++k) t.Add(0.1 * k, testing::RandomPose(rng, 3.0, 3.0));
  return t;
}

TEST(DepthMetrics, WorkedExample) {
  const DepthErrorReport r = DepthMetrics(DepthImage({1.0f}), DepthImage({2.0f}));
  EXPECT_DOUBLE_EQ(r.mae, 1000.0);
  EXPECT_DOUBLE_EQ(r.rmse, 1000.0);
  EXPECT_DOUBLE_EQ(r.imae, 500.0);
  EXPECT_DOUBLE_EQ(r.irmse, 500.0);
  EXPECT_EQ(r.count, 1u);
}

TEST(DepthMetrics, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> d(0.0f, 6.0f);
  std::bernoulli_distribution hole(0.1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> p(50), g(50);
    for (int k = 0; k < 50; ++k) {
      p[k] = hole(rng) ? 0.0f : d(rng);
      g[k] = d(rng);
    }
    double a = 0, s = 0, ia = 0, is = 0;
    int n = 0;
    for (int k = 0; k < 50; ++k) {
      if (p[k] <= 0.0f || g[k] < 0.2f || g[k] > 5.0f) continue;
      const double e = std::abs(double(p[k]) - double(g[k]));
      const double ie = std::abs(1.0 / p[k] - 1.0 / g[k]);
      a += e;
      s += e * e;
      ia += ie;
      is += ie * ie;
      ++n;
    }
    const DepthErrorReport r = DepthMetrics(DepthImage(p), DepthImage(g));
    ASSERT_EQ(r.count, static_cast<std::size_t>(n));
    EXPECT_NEAR(r.mae, 1000.0 * a / n, 1e-9);
    EXPECT_NEAR(r.rmse, 1000.0 * std::sqrt(s / n), 1e-9);
    EXPECT_NEAR(r.imae, 1000.0 * ia / n, 1e-9);
    EXPECT_NEAR(r.irmse, 1000.0 * std::sqrt(is / n), 1e-9);
  }
}

TEST(DepthMetrics, NoValidPixelIsDegenerate) {
  EXPECT_THROW(DepthMetrics(DepthImage({0.0f, 1.0f}), DepthImage({1.0f, 9.0f})),
               DegenerateError);
  EXPECT_THROW(DepthMetrics(DepthImage({1.0f}), DepthImage({1.0f, 1.0f})), DomainError);
}

TEST(MedianScale, LowerMiddleElement) {
  EXPECT_DOUBLE_EQ(LowerMedian({4.0, 1.0, 3.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(LowerMedian({5.0, 1.0, 3.0}), 3.0);
  EXPECT_THROW(LowerMedian({}), DomainError);
  EXPECT_DOUBLE_EQ(MedianScale(DepthImage({1, 2, 3, 0}), DepthImage({2, 4, 6, 8})), 2.0);
}

TEST(Associate, NearestWithinToleranceUsedOnce) {
  Trajectory est, gt;
  for (double t : {0.0, 0.1, 0.2, 0.5}) est.Add(t, Pose());
  for (double t : {0.005, 0.085, 0.11, 0.3}) gt.Add(t, Pose());
  const auto pairs = AssociateByTimestamp(est, gt, 0.02);
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {{0, 0}, {1, 2}};
  EXPECT_EQ(pairs, expected);
}

TEST(Associate, PairsAreWithinToleranceAndUnique) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  for (int trial = 0; trial < 100; ++trial) {
    Trajectory est, gt;
    for (int k = 0; k < 20; ++k) {
      est.Add(0.1 * k, Pose());
      gt.Add(0.1 * k + jitter(rng), Pose());
    }
    std::sort(gt.poses.begin(), gt.poses.end(),
              [](const TimedPose& a, const TimedPose& b) { return a.timestamp < b.timestamp; });
    const auto pairs = AssociateByTimestamp(est, gt, 0.02);
    std::vector<std::size_t> used;
    std::size_t brute = 0;
    for (int k = 0; k < 20; ++k) {
      brute += std::abs(gt.poses[k].timestamp - est.poses[k].timestamp) <= 0.02;
    }
    EXPECT_EQ(pairs.size(), brute);
    for (const auto& [i, j] : pairs) {
      EXPECT_LE(std::abs(est.poses[i].timestamp - gt.poses[j].timestamp), 0.02);
      used.push_back(j);
    }
    std::sort(used.begin(), used.end());
    EXPECT_EQ(std::unique(used.begin(), used.end()), used.end());
  }
}

TEST(AlignSim3, RecoversExactSimilarity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Trajectory gt = RandomTrajectory(rng, 10);
    const Similarity t = RandomSimilarity(rng);
    // est = t^-1 applied to gt.
    Trajectory est;
    for (const TimedPose& p : gt.poses) {
      const Eigen::Vector3d x =
          t.rotation.transpose() * (p.pose.translation() - t.translation) / t.scale;
      est.Add(p.timestamp, Pose(Eigen::Matrix3d::Identity(), x));
    }
    const Sim3Alignment a = AlignSim3(est, gt);
    EXPECT_NEAR(a.transform.scale, t.scale, 1e-8 * t.scale);
    EXPECT_LT((a.transform.rotation - t.rotation).norm(), 1e-8);
    EXPECT_LT(a.Rmse(), 1e-8);
  }
}

TEST(AlignSim3, IsOptimalUnderPerturbation) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Trajectory est = RandomTrajectory(rng, 8);
    const Trajectory gt = RandomTrajectory(rng, 8);
    const Sim3Alignment a = AlignSim3(est, gt);
    const std::vector<Eigen::Vector3d> xe = est.Positions();
    const std::vector<Eigen::Vector3d> xg = gt.Positions();
    const double best = AlignmentObjective(a.transform, xe, xg);
    EXPECT_NEAR(best, a.Rmse() * a.Rmse() * 8.0, 1e-9 * std::max(1.0, best));
    for (int k = 0; k < 10; ++k) {
      Similarity p = a.transform;
      p.scale *= std::exp(0.01 * g(rng));
      p.rotation = ExpSO3(0.01 * Eigen::Vector3d(g(rng), g(rng), g(rng))) * p.rotation;
      p.translation += 0.01 * Eigen::Vector3d(g(rng), g(rng), g(rng));
      EXPECT_GE(AlignmentObjective(p, xe, xg), best - 1e-12);
    }
  }
}

TEST(AlignSim3, DegenerateInputs) {
  Trajectory line, two;
  for (int k = 0; k < 5; ++k) {
    line.Add(k, Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(k, 0, 0)));
  }
  two.Add(0, Pose());
  two.Add(1, Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(1, 2, 3)));
  EXPECT_THROW(AlignSim3(line, line), DegenerateError);
  EXPECT_THROW(AlignSim3(two, two), DegenerateError);
}

TEST(FirstPoseAligned, RigidOffsetGivesZero) {
  std::mt19937_64 rng(5);
  const Trajectory gt = RandomTrajectory(rng, 12);
  const Pose offset = testing::RandomPose(rng);
  Trajectory est;
  for (const TimedPose& p : gt.poses) est.Add(p.timestamp, offset * p.pose);
  EXPECT_LT(FirstPoseAlignedRmse(est, gt), 1e-9);
  Trajectory fixed;
  for (const TimedPose& p : gt.poses) fixed.Add(p.timestamp, Pose());
  EXPECT_GT(FirstPoseAlignedRmse(fixed, gt), 0.1);
}

TEST(TrajectoryExtent, MatchesBruteForce) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Trajectory t = RandomTrajectory(rng, 15);
    const std::vector<Eigen::Vector3d> x = t.Positions();
    double brute = 0.0;
    for (const auto& a : x) {
      for (const auto& b : x) brute = std::max(brute, (a - b).norm());
    }
    EXPECT_DOUBLE_EQ(TrajectoryExtent(t), brute);
  }
}

TEST(Tum, RoundTripAndValidation) {
  TempDir dir("tum");
  std::mt19937_64 rng(7);
  const Trajectory t = RandomTrajectory(rng, 5);
  WriteTumTrajectory(dir / "t.txt", t);
  const Trajectory back = ReadTumTrajectory(dir / "t.txt");
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_NEAR(back.poses[k].timestamp, t.poses[k].timestamp, 1e-9);
    EXPECT_LT((back.poses[k].pose.Matrix() - t.poses[k].pose.Matrix()).norm(), 1e-6);
  }
  {
    std::ofstream out(dir / "bad.txt");
    out << "# comment\n1.0 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n";
  }
  EXPECT_THROW(ReadTumTrajectory(dir / "bad.txt"), FormatError);
  EXPECT_THROW(ParseTumLine("1.0 0 0 0 0 0 1"), FormatError);
}

}  // namespace
}  // namespace sprim
