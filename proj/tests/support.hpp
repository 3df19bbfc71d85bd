#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "gastro/camera.hpp"
#include "gastro/error.hpp"
#include "gastro/reconstruction.hpp"
#include "gastro/types.hpp"

namespace gastro::testing {

inline std::filesystem::path TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "gastro_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Vec3 RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

inline Mat3 RandomRotation(std::mt19937_64& rng, double max_angle = kPi) {
  std::uniform_real_distribution<double> u(0.0, max_angle);
  return ExpSO3(RandomUnit(rng) * u(rng));
}

inline CameraIntrinsics TestIntrinsics() {
  CameraIntrinsics intr;
  intr.focal_x = 300.0;
  intr.focal_y = 305.0;
  intr.principal_x = 319.5;
  intr.principal_y = 239.5;
  intr.k = {0.03, -0.01, 0.002, -0.0005};
  intr.width = 640;
  intr.height = 480;
  return intr;
}

// Camera at `center` looking at `target` (world-to-camera pose).
inline RigidPose LookAt(const Vec3& center, const Vec3& target, const Vec3& up = Vec3::UnitY()) {
  const Vec3 z = (target - center).normalized();
  Vec3 x = up.cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  RigidPose pose;
  pose.rotation.row(0) = x.transpose();
  pose.rotation.row(1) = y.transpose();
  pose.rotation.row(2) = z.transpose();
  pose.translation = -pose.rotation * center;
  return pose;
}

// Cameras on a ring around the origin looking inwards and points in a ball
// around the origin; observations are exact projections. Image ids are 0..n-1
// and image 0 / 1 form the gauge pair.
inline Reconstruction SyntheticScene(int num_cameras, int num_points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Reconstruction recon;
  recon.intrinsics = TestIntrinsics();
  recon.keypoints.resize(num_cameras);
  recon.keypoint_track.resize(num_cameras);
  recon.frame_indices.resize(num_cameras);
  for (int i = 0; i < num_cameras; ++i) {
    recon.frame_indices[i] = i;
    const double a = 0.6 * i / std::max(1, num_cameras - 1) - 0.3;
    const Vec3 c(4.0 * std::sin(a), 0.3 * u(rng), -4.0 * std::cos(a));
    recon.frames[i] = LookAt(c, Vec3(0.1 * u(rng), 0.1 * u(rng), 0.0));
  }
  for (int p = 0; p < num_points; ++p) {
    const Vec3 x(u(rng), u(rng), u(rng));
    Track track;
    track.point3d = x;
    for (int i = 0; i < num_cameras; ++i) {
      const auto px = TryProject(recon.intrinsics, recon.frames[i].Apply(x));
      if (!px) continue;
      recon.keypoints[i].push_back(*px);
      recon.keypoint_track[i].push_back(static_cast<int>(recon.tracks.size()));
      track.observations.push_back({i, static_cast<int>(recon.keypoints[i].size()) - 1});
    }
    recon.tracks.push_back(track);
  }
  recon.init_first = 0;
  recon.init_second = 1;
  const Vec3 t = recon.frames[1].translation;
  t.cwiseAbs().maxCoeff(&recon.gauge_axis);
  return recon;
}

inline double MeanReprojection(const Reconstruction& recon) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : recon.tracks) {
    if (!t.point3d) continue;
    for (const auto& o : recon.RegisteredObservations(t)) {
      sum += recon.ReprojectionError(t, o).value_or(1e9);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace gastro::testing

#include <vector>

namespace gastro::testing {

// 7x5 board (5 cm pitch) seen from `num_views` tilted poses, with optional
// Gaussian pixel noise.
inline std::vector<CalibrationView> BoardViews(const CameraIntrinsics& intr, int num_views,
                                               double noise_px, std::uint64_t seed,
                                               std::vector<RigidPose>* poses = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, noise_px > 0.0 ? noise_px : 1.0);
  const Vec3 target(0.15, 0.1, 0.0);
  std::vector<CalibrationView> views;
  while (static_cast<int>(views.size()) < num_views) {
    const double tilt = DegToRad(10.0 + 30.0 * std::abs(u(rng)));
    const double az = kPi * u(rng);
    const Vec3 dir(std::sin(tilt) * std::cos(az), std::sin(tilt) * std::sin(az), -std::cos(tilt));
    const Vec3 c = target + (0.25 + 0.15 * std::abs(u(rng))) * dir;
    const Vec3 up(std::cos(u(rng)), std::sin(u(rng)), 0.0);
    const RigidPose pose = LookAt(c, target + Vec3(0.03 * u(rng), 0.03 * u(rng), 0.0), up);
    CalibrationView view;
    bool ok = true;
    for (int y = 0; y < 5 && ok; ++y) {
      for (int x = 0; x < 7; ++x) {
        const Vec3 board(0.05 * x, 0.05 * y, 0.0);
        const auto px = TryProject(intr, pose.Apply(board));
        if (!px || px->x() < 0 || px->y() < 0 || px->x() > intr.width - 1 ||
            px->y() > intr.height - 1) {
          ok = false;
          break;
        }
        Vec2 obs = *px;
        if (noise_px > 0.0) obs += Vec2(noise(rng), noise(rng));
        view.correspondences.emplace_back(board, obs);
      }
    }
    if (!ok) continue;
    views.push_back(view);
    if (poses) poses->push_back(pose);
  }
  return views;
}

inline CameraIntrinsics BoardIntrinsics() {
  CameraIntrinsics intr;
  intr.focal_x = 600.0;
  intr.focal_y = 600.0;
  intr.principal_x = 960.0;
  intr.principal_y = 540.0;
  intr.k = {0.05, -0.01, 0.002, 0.0};
  intr.width = 1920;
  intr.height = 1080;
  return intr;
}

}  // namespace gastro::testing

namespace gastro::testing {

// Runs fn and returns the kind of the thrown gastro::Error, or nullopt.
template <typename Fn>
std::optional<ErrorKind> ThrownKind(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace gastro::testing
