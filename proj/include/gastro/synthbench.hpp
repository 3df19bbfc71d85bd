#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "gastro/camera.hpp"
#include "gastro/geometry.hpp"
#include "gastro/image.hpp"
#include "gastro/mesh.hpp"
#include "gastro/reconstruction.hpp"

namespace gastro {

enum class TextureVariant { kHigh, kLow };

std::string ToString(TextureVariant variant);
TextureVariant ParseTextureVariant(const std::string& name);

// Radial bumps stay below the smallest semi-axis, so the surface is a radial
// graph over the sphere: closed, genus 0 and free of self-intersections.
inline constexpr double kMaxBumpAmplitude = 0.08;

struct SceneParams {
  Vec3 radii{1.0, 0.7, 0.6};
  double bump_amplitude = 0.05;  // scene units
  int bump_terms = 6;
  TextureVariant texture = TextureVariant::kHigh;
  std::uint64_t seed = 7;
  int num_frames = 40;
  // Colocated light: shade = min(1, light_power * cos / distance^2), with
  // distance measured in the untransformed scene.
  double light_power = 0.2;
  // Maps the canonical scene into the world frame the renders live in.
  Similarity world_from_canonical;
  // World poses replacing the generated loop when non-empty.
  std::vector<RigidPose> trajectory;
};

class SyntheticScene {
 public:
  // Throws kInvalidScene for invalid parameters or a pose outside the cavity.
  explicit SyntheticScene(SceneParams params);

  const SceneParams& params() const { return params_; }
  const std::vector<RigidPose>& trajectory() const { return trajectory_; }

  // Canonical-frame surface: |p| = Radius(p / |p|).
  double Radius(const Vec3& direction) const;
  double Implicit(const Vec3& canonical) const;
  Vec3 ImplicitGradient(const Vec3& canonical) const;

  // World-frame queries.
  bool Inside(const Vec3& world) const;
  // Distance along a unit ray from an interior origin to the first hit.
  std::optional<double> Intersect(const Vec3& origin, const Vec3& direction) const;
  Vec3 Normal(const Vec3& world) const;  // unit, pointing out of the cavity
  Vec3 Albedo(const Vec3& world) const;  // RGB in [0, 1]
  double DistanceToSurface(const Vec3& world) const;
  Vec3 SurfacePoint(const Vec3& canonical_direction) const;  // world
  double Diameter() const;

  // Surface points along pseudo-random directions, world frame.
  std::vector<Vec3> SampleSurface(std::size_t n, std::uint64_t seed) const;

 private:
  Vec3 ToCanonical(const Vec3& world) const;
  double Mottle(const Vec3& canonical, double frequency, int octaves) const;

  SceneParams params_;
  std::vector<Vec3> bump_axes_;
  std::vector<double> bump_freq_;
  std::vector<double> bump_phase_;
  Vec3 gradient_axis_;
  std::vector<RigidPose> trajectory_;
};

// Fisheye intrinsics used for the synthetic renders.
CameraIntrinsics SyntheticIntrinsics(int width = 640, int height = 480);

struct RenderResult {
  std::vector<Image> images;  // RGB
  std::vector<RigidPose> poses;
  std::vector<std::vector<double>> depth;  // ray length per pixel, 0 without a hit
};

// Renders one view. Throws kInvalidScene when the camera is outside the cavity.
Image RenderView(const SyntheticScene& scene, const CameraIntrinsics& intr, const RigidPose& pose,
                 std::vector<double>* depth = nullptr);

RenderResult RenderViews(const SyntheticScene& scene, const CameraIntrinsics& intr,
                         bool with_depth = false);

struct AlignmentResult {
  Similarity transform;  // truth ~ transform(estimated)
  double rmse = 0.0;
};

// Closed-form least-squares similarity. Throws kDegenerateConfiguration for
// fewer than 3 points or collinear input.
AlignmentResult AlignSimilarity(const std::vector<Vec3>& estimated, const std::vector<Vec3>& truth);

struct EvalReport {
  double pose_rmse = 0.0;  // scene units
  double rot_rmse = 0.0;   // degrees
  double point_to_surface_rms = 0.0;
  double registered_pct = 0.0;
  ReconstructionStats stats;
  Similarity alignment;
  double trajectory_extent = 0.0;  // bounding-box diagonal of the true centers
};

// Bounding-box diagonal of the camera centers.
double TrajectoryExtent(const std::vector<RigidPose>& poses);

// Image ids map to scene frames through recon.frame_indices. Throws
// kInsufficientData with fewer than 3 registered frames. The mesh is optional.
EvalReport Evaluate(const Reconstruction& recon, const TriangleMesh* mesh,
                    const SyntheticScene& scene);

void WriteSceneJson(const std::filesystem::path& path, const SceneParams& params);
SceneParams ReadSceneJson(const std::filesystem::path& path);

// Writes frames/frame_%06d.png, intrinsics.json, poses.json and scene.json.
void WriteSyntheticDataset(const std::filesystem::path& dir, const SyntheticScene& scene,
                           const CameraIntrinsics& intr);

}  // namespace gastro
