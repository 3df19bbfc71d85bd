#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gastro/geometry.hpp"
#include "gastro/preprocess.hpp"
#include "gastro/sfm.hpp"
#include "gastro/synthbench.hpp"
#include "support.hpp"

namespace gastro {
namespace {

using testing::ThrownKind;

// Two cameras looking down +z; the second sits at world (1, 0, 0).
struct TwoViewData {
  std::vector<FeatureSet> features;
  std::vector<MatchSet> matches;
  std::vector<Vec3> points;
};

TwoViewData PureTranslationPair(int num_points, std::uint64_t seed) {
  const CameraIntrinsics intr = testing::TestIntrinsics();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-2.0, 3.0), uy(-2.0, 2.0), uz(2.0, 6.0);
  RigidPose second;
  second.translation = Vec3(-1.0, 0.0, 0.0);
  TwoViewData d;
  d.features.resize(2);
  d.matches.resize(1);
  d.matches[0].image1 = 0;
  d.matches[0].image2 = 1;
  for (auto& f : d.features) {
    f.width = intr.width;
    f.height = intr.height;
  }
  while (static_cast<int>(d.points.size()) < num_points) {
    const Vec3 x(ux(rng), uy(rng), uz(rng));
    const auto p1 = TryProject(intr, x);
    const auto p2 = TryProject(intr, second.Apply(x));
    if (!p1 || !p2) continue;
    const int k = static_cast<int>(d.points.size());
    d.points.push_back(x);
    Keypoint k1, k2;
    k1.x = static_cast<float>(p1->x());
    k1.y = static_cast<float>(p1->y());
    k2.x = static_cast<float>(p2->x());
    k2.y = static_cast<float>(p2->y());
    d.features[0].keypoints.push_back(k1);
    d.features[1].keypoints.push_back(k2);
    d.matches[0].matches.push_back({k, k, 0.0f});
  }
  for (auto& f : d.features) f.descriptors = DescriptorMatrix::Zero(num_points, kDescriptorSize);
  return d;
}

TEST(Geometry, EssentialFromPureTranslation) {
  const CameraIntrinsics intr = testing::TestIntrinsics();
  const auto d = PureTranslationPair(200, 1);
  std::vector<Vec3> b1, b2;
  for (int k = 0; k < 200; ++k) {
    b1.push_back(d.points[k].normalized());
    b2.push_back((d.points[k] - Vec3(1.0, 0.0, 0.0)).normalized());
  }
  const auto e = EssentialEightPoint(b1, b2);
  ASSERT_TRUE(e.has_value());
  for (int k = 0; k < 200; ++k) EXPECT_LT(std::abs(b2[k].dot(*e * b1[k])), 1e-9);
  const Mat3 expected = Skew(Vec3(1.0, 0.0, 0.0)).normalized();
  const Mat3 got = e->normalized();
  EXPECT_LT(std::min((got - expected).norm(), (got + expected).norm()), 1e-9);
  (void)intr;
}

TEST(Geometry, DecomposeContainsTruth) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 r = testing::RandomRotation(rng, 0.5);
    const Vec3 t = testing::RandomUnit(rng);
    const auto cands = DecomposeEssential(Skew(t) * r);
    double best = 1e9;
    for (const auto& c : cands) {
      best = std::min(best, (c.rotation - r).norm() + (c.translation - t).norm());
    }
    EXPECT_LT(best, 1e-9);
  }
}

TEST(Sfm, InitializeFromPureTranslation) {
  const auto d = PureTranslationPair(200, 3);
  SfmOptions options;
  const Reconstruction recon =
      InitializePair(d.matches, d.features, testing::TestIntrinsics(), options);
  ASSERT_EQ(recon.frames.size(), 2u);
  const RigidPose& p0 = recon.frames.at(recon.init_first);
  const RigidPose& p1 = recon.frames.at(recon.init_second);
  EXPECT_LT(RotationAngle(p0.rotation, Mat3::Identity()), 1e-12);
  EXPECT_LT(p0.translation.norm(), 1e-12);
  EXPECT_LT(RadToDeg(RotationAngle(p1.rotation, Mat3::Identity())), 0.1);
  const Vec3 dir = p1.translation.normalized();
  const double sign = recon.init_first == 0 ? -1.0 : 1.0;
  EXPECT_LT(RadToDeg(std::acos(std::clamp(sign * dir.x(), -1.0, 1.0))), 0.1);
  EXPECT_NEAR(p1.translation.norm(), 1.0, 1e-9);
  EXPECT_GE(recon.NumPoints(), 150u);
}

TEST(Sfm, RandomMatchesFailInitialization) {
  auto d = PureTranslationPair(300, 4);
  std::mt19937_64 rng(5);
  std::vector<int> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int k = 0; k < 300; ++k) d.matches[0].matches[k].index2 = perm[k];
  const auto kind = ThrownKind([&] {
    InitializePair(d.matches, d.features, testing::TestIntrinsics(), SfmOptions{});
  });
  EXPECT_EQ(kind, ErrorKind::kInitializationFailure);
}

TEST(Sfm, IdenticalImagesFailInitialization) {
  const SyntheticScene scene{SceneParams{}};
  FrameRecord f;
  f.image = RenderView(scene, SyntheticIntrinsics(320, 240), scene.trajectory()[0]);
  const Image red = ExtractChannel(f, ChannelTag::kRed).image;
  const auto kind = ThrownKind(
      [&] { Reconstruct({red, red}, SyntheticIntrinsics(320, 240), SfmOptions{}); });
  EXPECT_EQ(kind, ErrorKind::kInitializationFailure);
}

struct PnpData {
  RigidPose pose;
  std::vector<Vec2> pixels;
  std::vector<Vec3> points;
};

PnpData PnpScene(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PnpData d;
  d.pose = testing::LookAt(Vec3(0.3, -0.2, -3.0), Vec3(0.1, 0.0, 0.0));
  const CameraIntrinsics intr = testing::TestIntrinsics();
  while (static_cast<int>(d.points.size()) < n) {
    const Vec3 x = testing::RandomUnit(rng) * std::uniform_real_distribution<double>(0, 1)(rng);
    const auto px = TryProject(intr, d.pose.Apply(x));
    if (!px) continue;
    d.points.push_back(x);
    d.pixels.push_back(*px);
  }
  return d;
}

TEST(Sfm, AbsolutePoseExact) {
  const auto d = PnpScene(50, 6);
  const auto est =
      EstimateAbsolutePose(testing::TestIntrinsics(), d.pixels, d.points, SfmOptions{}, 1);
  ASSERT_TRUE(est.has_value());
  EXPECT_EQ(est->num_inliers, 50u);
  EXPECT_LT(RotationAngle(est->pose.rotation, d.pose.rotation), 1e-6);
  EXPECT_LT((est->pose.Center() - d.pose.Center()).norm(), 1e-6);
}

TEST(Sfm, AbsolutePoseWithOutliers) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto d = PnpScene(50, 20 + seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0, 639), uy(0, 479);
    for (int k = 0; k < 20; ++k) d.pixels[k] = Vec2(ux(rng), uy(rng));
    const auto est =
        EstimateAbsolutePose(testing::TestIntrinsics(), d.pixels, d.points, SfmOptions{}, seed);
    ASSERT_TRUE(est.has_value());
    EXPECT_LT(RadToDeg(RotationAngle(est->pose.rotation, d.pose.rotation)), 0.5);
    EXPECT_LT((est->pose.Center() - d.pose.Center()).norm(), 0.01 * 2.0);
    EXPECT_GE(est->num_inliers, 30u);
  }
}

TEST(Sfm, TooFewCorrespondencesFailRegistration) {
  Reconstruction recon = testing::SyntheticScene(3, 10, 7);
  recon.frames.erase(2);
  EXPECT_EQ(CountCorrespondences(recon, 2), 10u);
  const auto kind = ThrownKind([&] { RegisterNextImage(recon, 2, SfmOptions{}); });
  EXPECT_EQ(kind, ErrorKind::kRegistrationFailure);
  EXPECT_FALSE(recon.IsRegistered(2));
}

TEST(Sfm, RegisterRecoversPose) {
  Reconstruction recon = testing::SyntheticScene(3, 60, 8);
  const RigidPose truth = recon.frames.at(2);
  recon.frames.erase(2);
  EXPECT_GE(RegisterNextImage(recon, 2, SfmOptions{}), 50u);
  ASSERT_TRUE(recon.IsRegistered(2));
  EXPECT_LT(RotationAngle(recon.frames.at(2).rotation, truth.rotation), 1e-6);
  EXPECT_LT((recon.frames.at(2).Center() - truth.Center()).norm(), 1e-6);
}

// Two frames at (+-0.5, 0, 0) looking down +z.
Reconstruction StereoRig(const std::vector<Vec3>& points) {
  Reconstruction recon;
  recon.intrinsics = testing::TestIntrinsics();
  recon.keypoints.resize(2);
  recon.keypoint_track.resize(2);
  recon.frame_indices = {0, 1};
  for (int i = 0; i < 2; ++i) {
    RigidPose p;
    p.translation = Vec3(i == 0 ? 0.5 : -0.5, 0.0, 0.0);
    recon.frames[i] = p;
  }
  for (const Vec3& x : points) {
    Track t;
    for (int i = 0; i < 2; ++i) {
      recon.keypoints[i].push_back(Project(recon.intrinsics, recon.frames[i].Apply(x)));
      recon.keypoint_track[i].push_back(static_cast<int>(recon.tracks.size()));
      t.observations.push_back({i, static_cast<int>(recon.keypoints[i].size()) - 1});
    }
    recon.tracks.push_back(t);
  }
  recon.init_first = 0;
  recon.init_second = 1;
  return recon;
}

TEST(Sfm, TriangulateStereoExample) {
  const std::vector<Vec3> centers = {Vec3(-0.5, 0, 0), Vec3(0.5, 0, 0)};
  const Vec3 x(0, 0, 2);
  const std::vector<Vec3> dirs = {(x - centers[0]).normalized(), (x - centers[1]).normalized()};
  const auto mid = TriangulateMidpoint(centers, dirs);
  ASSERT_TRUE(mid.has_value());
  EXPECT_LT((*mid - x).norm(), 1e-9);

  Reconstruction recon = StereoRig({x});
  EXPECT_EQ(TriangulateTracks(recon, SfmOptions{}), 1u);
  ASSERT_TRUE(recon.tracks[0].point3d.has_value());
  EXPECT_LT((*recon.tracks[0].point3d - x).norm(), 1e-9);
}

TEST(Sfm, ParallelRaysRejected) {
  EXPECT_FALSE(
      TriangulateTwoRays(Vec3(-0.5, 0, 0), Vec3::UnitZ(), Vec3(0.5, 0, 0), Vec3::UnitZ()));
  Reconstruction recon = StereoRig({Vec3(0, 0, 1e7)});
  EXPECT_EQ(TriangulateTracks(recon, SfmOptions{}), 0u);
  EXPECT_FALSE(recon.tracks[0].point3d.has_value());
}

TEST(Sfm, NoisyTriangulationTenViews) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.5);
  Reconstruction recon;
  recon.intrinsics = testing::TestIntrinsics();
  recon.keypoints.resize(10);
  recon.keypoint_track.resize(10);
  for (int i = 0; i < 10; ++i) {
    const double a = DegToRad(-45.0 + 10.0 * i);
    recon.frames[i] = testing::LookAt(Vec3(3.0 * std::sin(a), 0.2, -3.0 * std::cos(a)), Vec3::Zero());
  }
  std::vector<Vec3> truth;
  for (int p = 0; p < 200; ++p) {
    const Vec3 x = 0.5 * testing::RandomUnit(rng);
    truth.push_back(x);
    Track t;
    for (int i = 0; i < 10; ++i) {
      const Vec2 px = Project(recon.intrinsics, recon.frames[i].Apply(x));
      recon.keypoints[i].push_back(px + Vec2(noise(rng), noise(rng)));
      recon.keypoint_track[i].push_back(p);
      t.observations.push_back({i, static_cast<int>(recon.keypoints[i].size()) - 1});
    }
    recon.tracks.push_back(t);
  }
  recon.init_first = 0;
  recon.init_second = 1;
  EXPECT_EQ(TriangulateTracks(recon, SfmOptions{}), 200u);
  double sq = 0.0;
  for (int p = 0; p < 200; ++p) sq += (*recon.tracks[p].point3d - truth[p]).squaredNorm();
  EXPECT_LT(std::sqrt(sq / 200.0), 0.01);
}

TEST(Sfm, StatsPercentRounding) {
  EXPECT_DOUBLE_EQ(RoundedPercent(1249, 1489), 83.9);
  EXPECT_DOUBLE_EQ(RoundedPercent(891, 2304), 38.7);
  EXPECT_DOUBLE_EQ(RoundedPercent(2297, 2327), 98.7);
  EXPECT_DOUBLE_EQ(RoundedPercent(567, 1476), 38.4);
  // 100 * 1481 / 1483 = 99.865, which rounds to 99.9 (the table prints 99.8).
  EXPECT_DOUBLE_EQ(RoundedPercent(1481, 1483), 99.9);
  EXPECT_DOUBLE_EQ(RoundedPercent(0, 0), 0.0);
}

TEST(Sfm, StatsCounts) {
  Reconstruction recon;
  recon.keypoints.resize(1483);
  recon.keypoint_track.resize(1483);
  for (int i = 0; i < 1481; ++i) recon.frames[i] = RigidPose{};
  const auto s = ComputeStats(recon);
  EXPECT_EQ(s.input_images, 1483u);
  EXPECT_EQ(s.reconstructed_images, 1481u);
  EXPECT_LE(s.reconstructed_images, s.input_images);

  Reconstruction two;
  two.keypoints.resize(3);
  two.frames[0] = RigidPose{};
  two.frames[1] = RigidPose{};
  auto add = [&](std::vector<Observation> obs, bool triangulated) {
    Track t;
    t.observations = std::move(obs);
    if (triangulated) t.point3d = Vec3(0, 0, 1);
    two.tracks.push_back(t);
  };
  add({{0, 0}, {1, 0}}, true);
  add({{0, 1}, {1, 1}}, true);
  add({{0, 2}, {1, 2}, {2, 0}}, true);
  add({{1, 3}, {2, 1}}, true);
  add({{1, 4}, {2, 2}}, true);
  add({{0, 3}, {1, 5}}, false);
  const auto s2 = ComputeStats(two);
  EXPECT_EQ(s2.points3d, 5u);
  EXPECT_DOUBLE_EQ(s2.average_observation, 4.0);

  Reconstruction empty;
  empty.keypoints.resize(4);
  const auto s3 = ComputeStats(empty);
  EXPECT_EQ(s3.reconstructed_pct, 0.0);
  EXPECT_EQ(s3.points3d, 0u);
  EXPECT_EQ(s3.average_observation, 0.0);
}

TEST(Sfm, SyntheticInvariantsHold) {
  const Reconstruction recon = testing::SyntheticScene(6, 100, 10);
  EXPECT_EQ(CountInvariantViolations(recon, 4.0), 0u);
}

}  // namespace
}  // namespace gastro
