#include <gtest/gtest.h>

#include <random>

#include "gastro/bundle_adjust.hpp"
#include "support.hpp"

namespace gastro {
namespace {

double MaxRelativeDeviation(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  return (analytic - numeric).cwiseAbs().maxCoeff() / numeric.cwiseAbs().maxCoeff();
}

TEST(BundleAdjust, JacobianMatchesCentralDifferences) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const CameraIntrinsics intr = testing::TestIntrinsics();
  int checked = 0;
  while (checked < 100) {
    RigidPose pose;
    pose.rotation = testing::RandomRotation(rng);
    pose.translation = Vec3(u(rng), u(rng), u(rng));
    const Vec3 cam = testing::RandomUnit(rng) * (1.0 + 2.0 * std::abs(u(rng)));
    if (std::acos(cam.normalized().z()) > DegToRad(100.0)) continue;
    const Vec3 point = pose.Inverse().Apply(cam);
    const Vec2 observed(300.0 + 50.0 * u(rng), 200.0 + 50.0 * u(rng));
    const auto lin = LinearizeObservation(intr, pose, point, observed);

    const double h = 1e-6;
    Eigen::Matrix<double, 2, 6> fd_pose;
    for (int k = 0; k < 6; ++k) {
      Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
      d[k] = h;
      const Vec2 plus = LinearizeObservation(intr, RetractPose(pose, d), point, observed).residual;
      const Vec2 minus = LinearizeObservation(intr, RetractPose(pose, -d), point, observed).residual;
      fd_pose.col(k) = (plus - minus) / (2.0 * h);
    }
    Eigen::Matrix<double, 2, 3> fd_point;
    for (int k = 0; k < 3; ++k) {
      const Vec3 d = Vec3::Unit(k) * h;
      const Vec2 plus = LinearizeObservation(intr, pose, point + d, observed).residual;
      const Vec2 minus = LinearizeObservation(intr, pose, point - d, observed).residual;
      fd_point.col(k) = (plus - minus) / (2.0 * h);
    }
    EXPECT_LT(MaxRelativeDeviation(lin.d_pose, fd_pose), 1e-4);
    EXPECT_LT(MaxRelativeDeviation(lin.d_point, fd_point), 1e-4);
    ++checked;
  }
}

TEST(BundleAdjust, HuberCost) {
  EXPECT_DOUBLE_EQ(HuberCost(1.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(HuberCost(4.0, 2.0), 4.0);
  EXPECT_DOUBLE_EQ(HuberCost(9.0, 2.0), 2.0 * 2.0 * 3.0 - 4.0);
}

void Perturb(Reconstruction& recon, double fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& [id, pose] : recon.frames) {
    if (id == recon.init_first) continue;
    const Vec3 c = pose.Center();
    Eigen::Matrix<double, 6, 1> d;
    for (int k = 0; k < 3; ++k) d[k] = fraction * n(rng);
    for (int k = 3; k < 6; ++k) d[k] = fraction * c.norm() * n(rng);
    if (id == recon.init_second) d[3 + recon.gauge_axis] = 0.0;
    const Vec3 keep = pose.translation;
    pose = RetractPose(pose, d);
    if (id == recon.init_second) pose.translation[recon.gauge_axis] = keep[recon.gauge_axis];
  }
  for (auto& t : recon.tracks) {
    if (t.point3d) *t.point3d += fraction * Vec3(n(rng), n(rng), n(rng));
  }
}

TEST(BundleAdjust, RecoversFromPerturbation) {
  Reconstruction recon = testing::SyntheticScene(8, 300, 2);
  Perturb(recon, 0.01, 3);
  const double before = testing::MeanReprojection(recon);
  EXPECT_GT(before, 1.0);
  BundleAdjustOptions options;
  options.max_iterations = 100;
  const auto report = BundleAdjust(recon, GlobalScope(recon), options);
  EXPECT_LT(testing::MeanReprojection(recon), 0.01);
  EXPECT_EQ(report.pruned, 0u);
}

TEST(BundleAdjust, CostIsMonotone) {
  Reconstruction recon = testing::SyntheticScene(6, 200, 4);
  Perturb(recon, 0.02, 5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& kps : recon.keypoints)
    for (auto& k : kps) k += Vec2(n(rng), n(rng));
  BundleAdjustOptions options;
  options.prune = false;
  const auto report = BundleAdjust(recon, GlobalScope(recon), options);
  ASSERT_GE(report.cost_history.size(), 2u);
  EXPECT_DOUBLE_EQ(report.cost_history.front(), report.initial_cost);
  for (std::size_t i = 1; i < report.cost_history.size(); ++i) {
    EXPECT_LE(report.cost_history[i], report.cost_history[i - 1]);
  }
  EXPECT_LT(report.final_cost, report.initial_cost);
  EXPECT_NEAR(report.final_cost, BundleCost(recon, GlobalScope(recon), options.huber_delta),
              1e-9 * report.final_cost);
}

TEST(BundleAdjust, OptimalInputIsFixedPoint) {
  Reconstruction recon = testing::SyntheticScene(6, 200, 7);
  const Reconstruction before = recon;
  const auto report = BundleAdjust(recon, GlobalScope(recon));
  EXPECT_LT(std::abs(report.final_cost - report.initial_cost), 1e-12);
  EXPECT_EQ(report.pruned, 0u);
  for (const auto& [id, pose] : before.frames) {
    EXPECT_LT((recon.frames.at(id).translation - pose.translation).norm(), 1e-9);
  }
}

TEST(BundleAdjust, GaugeFramesStayPut) {
  Reconstruction recon = testing::SyntheticScene(6, 200, 8);
  const RigidPose first = recon.frames.at(recon.init_first);
  const double pinned = recon.frames.at(recon.init_second).translation[recon.gauge_axis];
  Perturb(recon, 0.01, 9);
  BundleAdjust(recon, GlobalScope(recon));
  EXPECT_EQ(recon.frames.at(recon.init_first).rotation, first.rotation);
  EXPECT_EQ(recon.frames.at(recon.init_first).translation, first.translation);
  EXPECT_EQ(recon.frames.at(recon.init_second).translation[recon.gauge_axis], pinned);
}

TEST(BundleAdjust, PrunesGrossOutliers) {
  Reconstruction recon = testing::SyntheticScene(6, 200, 10);
  recon.keypoints[3][0] += Vec2(40.0, -30.0);
  const std::size_t removed = PruneObservations(recon, 4.0);
  EXPECT_EQ(removed, 1u);
  EXPECT_EQ(recon.keypoint_track[3][0], -1);
}

}  // namespace
}  // namespace gastro
