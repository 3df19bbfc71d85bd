#include <gtest/gtest.h>

#include <random>

#include "gastro/image_io.hpp"
#include "gastro/manifest.hpp"
#include "gastro/synthbench.hpp"
#include "support.hpp"

namespace gastro {
namespace {

using testing::ThrownKind;

SceneParams Ellipsoid() {
  SceneParams p;
  p.bump_amplitude = 0.0;
  p.trajectory = {RigidPose{}};
  return p;
}

TEST(Synthbench, EllipsoidDepthMatchesAnalytic) {
  const SyntheticScene scene(Ellipsoid());
  const CameraIntrinsics intr = SyntheticIntrinsics(161, 121);
  std::vector<double> depth;
  RenderView(scene, intr, RigidPose{}, &depth);
  const Vec3 r = scene.params().radii;
  const std::size_t center = 60 * 161 + 80;
  EXPECT_NEAR(depth[center], r.z(), 1e-6);
  int checked = 0;
  for (int y = 0; y < intr.height; y += 7) {
    for (int x = 0; x < intr.width; x += 7) {
      const auto dir = TryUnproject(intr, Vec2(x, y));
      if (!dir) continue;
      const Vec3 d = dir->normalized();
      const double t = 1.0 / std::sqrt(std::pow(d.x() / r.x(), 2) + std::pow(d.y() / r.y(), 2) +
                                       std::pow(d.z() / r.z(), 2));
      EXPECT_NEAR(depth[y * intr.width + x], t, 1e-6);
      ++checked;
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(Synthbench, RendersAreDeterministic) {
  const SyntheticScene a{SceneParams{}};
  const SyntheticScene b{SceneParams{}};
  const CameraIntrinsics intr = SyntheticIntrinsics(160, 120);
  EXPECT_EQ(RenderView(a, intr, a.trajectory()[5]), RenderView(b, intr, b.trajectory()[5]));
  SceneParams other;
  other.seed = 8;
  const SyntheticScene c(other);
  EXPECT_NE(RenderView(a, intr, a.trajectory()[5]), RenderView(c, intr, c.trajectory()[5]));
}

TEST(Synthbench, HighTextureHasMoreRedEnergy) {
  SceneParams low;
  low.texture = TextureVariant::kLow;
  const SyntheticScene hi{SceneParams{}};
  const SyntheticScene lo(low);
  const CameraIntrinsics intr = SyntheticIntrinsics(320, 240);
  for (int f : {0, 13, 27}) {
    EXPECT_GT(LaplacianStd(RenderView(hi, intr, hi.trajectory()[f]), 0),
              LaplacianStd(RenderView(lo, intr, lo.trajectory()[f]), 0));
  }
}

TEST(Synthbench, PoseOutsideCavityThrows) {
  SceneParams p;
  p.trajectory = {testing::LookAt(Vec3(3.0, 0, 0), Vec3::Zero())};
  EXPECT_EQ(ThrownKind([&] { SyntheticScene s(p); }), ErrorKind::kInvalidScene);
  SceneParams bumpy;
  bumpy.bump_amplitude = 0.5;
  EXPECT_EQ(ThrownKind([&] { SyntheticScene s(bumpy); }), ErrorKind::kInvalidScene);
  const SyntheticScene ok{SceneParams{}};
  EXPECT_EQ(ThrownKind([&] {
              RenderView(ok, SyntheticIntrinsics(64, 64), p.trajectory[0]);
            }),
            ErrorKind::kInvalidScene);
}

TEST(Synthbench, TrajectoryInsideCavity) {
  const SyntheticScene scene{SceneParams{}};
  ASSERT_EQ(scene.trajectory().size(), 40u);
  for (const auto& pose : scene.trajectory()) {
    EXPECT_TRUE(scene.Inside(pose.Center()));
    EXPECT_LT(RotationAngle(pose.rotation * pose.rotation.transpose(), Mat3::Identity()), 1e-12);
  }
}

TEST(Synthbench, AlignIdentity) {
  std::mt19937_64 rng(1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(testing::RandomUnit(rng) * 2.0);
  const auto a = AlignSimilarity(pts, pts);
  EXPECT_NEAR(a.transform.scale, 1.0, 1e-12);
  EXPECT_LT((a.transform.rotation - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT(a.transform.translation.norm(), 1e-12);
  EXPECT_LT(a.rmse, 1e-12);
}

TEST(Synthbench, AlignRecoversKnownTransform) {
  std::mt19937_64 rng(2);
  std::vector<Vec3> est, truth;
  const Mat3 r = Eigen::AngleAxisd(DegToRad(30.0), Vec3::UnitZ()).toRotationMatrix();
  const Vec3 t(1, 2, 3);
  for (int i = 0; i < 30; ++i) {
    est.push_back(testing::RandomUnit(rng) * 1.5);
    truth.push_back(2.5 * r * est.back() + t);
  }
  const auto a = AlignSimilarity(est, truth);
  EXPECT_NEAR(a.transform.scale, 2.5, 1e-9);
  EXPECT_LT((a.transform.rotation - r).norm(), 1e-9);
  EXPECT_LT((a.transform.translation - t).norm(), 1e-9);
  EXPECT_LT(a.rmse, 1e-9);
}

TEST(Synthbench, AlignRejectsDegenerate) {
  const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2)};
  EXPECT_EQ(ThrownKind([&] { AlignSimilarity(line, line); }), ErrorKind::kDegenerateConfiguration);
  const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  EXPECT_EQ(ThrownKind([&] { AlignSimilarity(two, two); }), ErrorKind::kDegenerateConfiguration);
}

TEST(Synthbench, AlignRmseInvariantUnderSimilarity) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.05);
  std::vector<Vec3> est, truth;
  for (int i = 0; i < 40; ++i) {
    truth.push_back(testing::RandomUnit(rng));
    est.push_back(truth.back() + Vec3(n(rng), n(rng), n(rng)));
  }
  const double base = AlignSimilarity(est, truth).rmse;
  EXPECT_GT(base, 0.01);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat3 r = testing::RandomRotation(rng);
    const double s = 0.2 + 3.0 * std::abs(n(rng)) * 10.0;
    const Vec3 t = 5.0 * testing::RandomUnit(rng);
    std::vector<Vec3> moved;
    for (const Vec3& p : est) moved.push_back(s * r * p + t);
    EXPECT_NEAR(AlignSimilarity(moved, truth).rmse, base, 1e-9);
  }
}

// Reconstruction whose frames are the ground truth mapped through `gauge`.
Reconstruction GroundTruthRecon(const SyntheticScene& scene, const Similarity& gauge) {
  Reconstruction recon;
  const auto& traj = scene.trajectory();
  recon.keypoints.resize(traj.size());
  recon.keypoint_track.resize(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    recon.frame_indices.push_back(static_cast<int>(i));
    RigidPose p;
    p.rotation = traj[i].rotation * gauge.rotation.transpose();
    p.translation = -p.rotation * gauge.Apply(traj[i].Center());
    recon.frames[static_cast<int>(i)] = p;
  }
  return recon;
}

TEST(Synthbench, EvaluateExactGroundTruth) {
  const SyntheticScene scene{SceneParams{}};
  TriangleMesh mesh;
  mesh.vertices = scene.SampleSurface(500, 4);
  for (const Similarity& gauge :
       {Similarity{}, Similarity{0.37, Eigen::AngleAxisd(1.1, Vec3(1, 2, 3).normalized())
                                            .toRotationMatrix(),
                                 Vec3(0.5, -2.0, 7.0)}}) {
    const Reconstruction recon = GroundTruthRecon(scene, gauge);
    TriangleMesh est_mesh = mesh;
    for (Vec3& v : est_mesh.vertices) v = gauge.Apply(v);
    const EvalReport r = Evaluate(recon, &est_mesh, scene);
    EXPECT_LT(r.pose_rmse, 1e-9);
    EXPECT_LT(r.rot_rmse, 1e-9);
    EXPECT_LT(r.point_to_surface_rms, 1e-9);
    EXPECT_DOUBLE_EQ(r.registered_pct, 100.0);
    EXPECT_NEAR(r.alignment.scale, 1.0 / gauge.scale, 1e-9);
  }
}

TEST(Synthbench, EvaluateWithPositionNoise) {
  const SyntheticScene scene{SceneParams{}};
  const double extent = TrajectoryExtent(scene.trajectory());
  const double sigma = 0.01 * extent / std::sqrt(3.0);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    Reconstruction recon = GroundTruthRecon(scene, Similarity{});
    for (auto& [id, pose] : recon.frames) {
      const Vec3 c = pose.Center() + Vec3(n(rng), n(rng), n(rng));
      pose.translation = -pose.rotation * c;
    }
    const EvalReport r = Evaluate(recon, nullptr, scene);
    EXPECT_GT(r.pose_rmse, 0.5 * 0.01 * extent);
    EXPECT_LT(r.pose_rmse, 1.5 * 0.01 * extent);
    EXPECT_DOUBLE_EQ(r.trajectory_extent, extent);
  }
}

TEST(Synthbench, EvaluateNeedsThreeFrames) {
  const SyntheticScene scene{SceneParams{}};
  Reconstruction recon = GroundTruthRecon(scene, Similarity{});
  while (recon.frames.size() > 2) recon.frames.erase(recon.frames.begin());
  EXPECT_EQ(ThrownKind([&] { Evaluate(recon, nullptr, scene); }), ErrorKind::kInsufficientData);
}

TEST(Synthbench, SurfaceSamplesAreExact) {
  const SyntheticScene scene{SceneParams{}};
  for (const Vec3& p : scene.SampleSurface(300, 5)) {
    EXPECT_LT(std::abs(scene.DistanceToSurface(p)), 1e-9);
  }
  const Vec3 inside = 0.5 * scene.SurfacePoint(Vec3(1, 0.2, -0.1).normalized());
  EXPECT_GT(std::abs(scene.DistanceToSurface(inside)), 0.1);
}

TEST(Synthbench, DepthIsPhotoConsistent) {
  SceneParams params;
  params.texture = TextureVariant::kLow;
  const SyntheticScene scene(params);
  const CameraIntrinsics intr = SyntheticIntrinsics(320, 240);
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> ux(0, intr.width - 1), uy(0, intr.height - 1);
  int checked = 0;
  int consistent = 0;
  for (int f = 0; f + 1 < 40; f += 6) {
    const RigidPose& a = scene.trajectory()[f];
    const RigidPose& b = scene.trajectory()[f + 1];
    std::vector<double> da, db;
    const Image ia = RenderView(scene, intr, a, &da);
    const Image ib = RenderView(scene, intr, b, &db);
    int tried = 0;
    for (int sample = 0; tried < 20 && sample < 2000; ++sample) {
      const int x = ux(rng), y = uy(rng);
      const double t = da[y * intr.width + x];
      if (t <= 0.0) continue;
      const Vec3 world = a.Center() + t * (a.rotation.transpose() * Unproject(intr, Vec2(x, y)).normalized());
      const auto px = TryProject(intr, b.Apply(world));
      if (!px || px->x() < 1 || px->y() < 1 || px->x() > intr.width - 2 || px->y() > intr.height - 2)
        continue;
      const int bx = static_cast<int>(std::lround(px->x()));
      const int by = static_cast<int>(std::lround(px->y()));
      if (std::abs(db[by * intr.width + bx] - (world - b.Center()).norm()) > 0.02) continue;
      ++tried;
      auto shade = [&](const Vec3& c) {
        const Vec3 dir = (world - c).normalized();
        const double d = (world - c).norm();
        return std::min(1.0, params.light_power * std::max(0.0, scene.Normal(world).dot(dir)) / (d * d));
      };
      const double sa = shade(a.Center());
      const double sb = shade(b.Center());
      if (sa < 0.05 || sb < 0.05 || sa >= 1.0 || sb >= 1.0) continue;
      ++checked;
      double ratio_err = 0.0;
      for (int c = 0; c < 3; ++c) {
        double vb = 0.0;
        SampleBilinear(ib, px->x(), px->y(), c, &vb);
        ratio_err = std::max(ratio_err, std::abs(ia.at(x, y, c) / sa - vb / sb) / 255.0);
      }
      if (ratio_err < 0.05) ++consistent;
    }
  }
  ASSERT_GT(checked, 60);
  EXPECT_GE(consistent, static_cast<int>(0.95 * checked));
}

TEST(Synthbench, SimilarityInvariantRenders) {
  SceneParams moved;
  moved.world_from_canonical.scale = 2.0;
  moved.world_from_canonical.rotation << 0, -1, 0, 0, 0, 1, -1, 0, 0;
  const SyntheticScene a{SceneParams{}};
  const SyntheticScene b(moved);
  const CameraIntrinsics intr = SyntheticIntrinsics(160, 120);
  for (int f : {0, 21}) {
    const Image ia = RenderView(a, intr, a.trajectory()[f]);
    const Image ib = RenderView(b, intr, b.trajectory()[f]);
    int worst = 0;
    for (std::size_t i = 0; i < ia.data.size(); ++i)
      worst = std::max(worst, std::abs(int(ia.data[i]) - int(ib.data[i])));
    EXPECT_LE(worst, 1);
  }
  EXPECT_NEAR(b.Diameter(), 2.0 * a.Diameter(), 1e-12);
}

TEST(Synthbench, DatasetLayout) {
  const auto dir = testing::TempDir("synth_dataset");
  SceneParams p;
  p.num_frames = 4;
  p.texture = TextureVariant::kLow;
  const SyntheticScene scene(p);
  WriteSyntheticDataset(dir, scene, SyntheticIntrinsics(96, 72));
  for (int i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.png", i);
    EXPECT_EQ(ReadPng(dir / "frames" / name).width, 96);
  }
  const CameraIntrinsics intr = ReadIntrinsicsJson(dir / "intrinsics.json");
  EXPECT_EQ(intr.width, 96);
  EXPECT_DOUBLE_EQ(intr.focal_x, SyntheticIntrinsics(96, 72).focal_x);
  const auto poses = ReadPosesJson(dir / "poses.json");
  ASSERT_EQ(poses.size(), 4u);
  const SceneParams back = ReadSceneJson(dir / "scene.json");
  EXPECT_EQ(back.seed, p.seed);
  EXPECT_EQ(back.texture, TextureVariant::kLow);
  EXPECT_EQ(back.num_frames, 4);
  const SyntheticScene again(back);
  for (int i = 0; i < 4; ++i)
    EXPECT_LT((again.trajectory()[i].Center() - scene.trajectory()[i].Center()).norm(), 1e-12);
}

}  // namespace
}  // namespace gastro
