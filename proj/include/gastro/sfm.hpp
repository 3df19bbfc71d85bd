#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "gastro/bundle_adjust.hpp"
#include "gastro/features.hpp"
#include "gastro/image.hpp"
#include "gastro/reconstruction.hpp"

namespace gastro {

struct SfmOptions {
  double max_reproj = 4.0;
  double min_triangulation_angle_deg = 1.5;
  double ransac_confidence = 0.9999;
  std::size_t ransac_max_iterations = 10000;
  std::uint64_t seed = 42;

  // Two-view verification.
  double essential_threshold_px = 2.0;
  int min_pair_matches = 15;
  int min_pair_inliers = 15;

  // Initialization.
  int init_min_inliers = 100;
  double init_min_median_angle_deg = 1.5;
  int init_min_points = 50;
  int init_max_attempts = 5;

  // Registration.
  int min_correspondences = 15;
  int min_pnp_inliers = 12;
  double min_inlier_ratio = 0.25;

  // Bundle adjustment schedule.
  int local_ba_neighbors = 6;
  int local_ba_iterations = 15;
  int global_ba_interval = 10;
  int global_ba_iterations = 30;
  double ba_relative_tolerance = 1e-6;
  double huber_delta = 2.0;

  SiftOptions sift;
  MatchOptions match;
};

// Independent seed for a numbered random stream.
std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream);

// Essential-matrix verified matches of one image pair; relative maps image1's
// camera frame to image2's (x2 = R x1 + t, |t| = 1).
struct VerifiedPair {
  int image1 = 0;
  int image2 = 0;
  std::vector<Match> inliers;
  RigidPose relative;
  double median_angle_deg = 0.0;
};

std::optional<VerifiedPair> VerifyPair(const FeatureSet& features1, const FeatureSet& features2,
                                       const MatchSet& matches, const CameraIntrinsics& intr,
                                       const SfmOptions& options);

std::vector<VerifiedPair> VerifyAllPairs(const std::vector<FeatureSet>& features,
                                         const std::vector<MatchSet>& matches,
                                         const CameraIntrinsics& intr, const SfmOptions& options);

// Empty reconstruction holding keypoints and tracks built by transitive
// closure of verified matches. Tracks with two keypoints in one image drop
// that image.
Reconstruction BuildTracks(const std::vector<FeatureSet>& features,
                           const std::vector<VerifiedPair>& pairs, const CameraIntrinsics& intr);

// Verifies all pairs, builds tracks and registers the best initial pair.
// Throws kInitializationFailure when no pair qualifies.
Reconstruction InitializePair(const std::vector<MatchSet>& matches,
                              const std::vector<FeatureSet>& features,
                              const CameraIntrinsics& intr, const SfmOptions& options,
                              const std::vector<Image>* images = nullptr);

// Same, starting from already verified pairs and a track graph.
void InitializeFromPairs(Reconstruction& recon, const std::vector<VerifiedPair>& pairs,
                         const SfmOptions& options, const std::vector<Image>* images = nullptr);

struct PoseEstimate {
  RigidPose pose;
  std::vector<bool> inliers;
  std::size_t num_inliers = 0;
};

// RANSAC over three-point absolute pose solutions followed by robust
// refinement. Returns nullopt when no sample yields a pose.
std::optional<PoseEstimate> EstimateAbsolutePose(const CameraIntrinsics& intr,
                                                 const std::vector<Vec2>& pixels,
                                                 const std::vector<Vec3>& points,
                                                 const SfmOptions& options, std::uint64_t seed);

// Levenberg-Marquardt on a single pose over the selected correspondences.
RigidPose RefinePose(const CameraIntrinsics& intr, const RigidPose& initial,
                     const std::vector<Vec2>& pixels, const std::vector<Vec3>& points,
                     const std::vector<bool>& use, double huber_delta);

// Number of triangulated tracks observed in an unregistered image.
std::size_t CountCorrespondences(const Reconstruction& recon, int image);

// Registers an image by absolute pose. Outlying observations of triangulated
// tracks are detached. Throws kRegistrationFailure. Returns the inlier count.
std::size_t RegisterNextImage(Reconstruction& recon, int image, const SfmOptions& options);

// Triangulates pending tracks with at least two registered observations.
// With `only_images`, only tracks observed in one of them are considered.
// Grey colors are sampled from `images` when given. Returns the number of new points.
std::size_t TriangulateTracks(Reconstruction& recon, const SfmOptions& options,
                              const std::vector<Image>* images = nullptr,
                              const std::set<int>* only_images = nullptr);

// Local adjustment around one image: it and its most covisible neighbours vary.
BundleAdjustReport LocalBundleAdjust(Reconstruction& recon, int image, const SfmOptions& options);
BundleAdjustReport GlobalBundleAdjust(Reconstruction& recon, const SfmOptions& options);

struct ReconstructResult {
  Reconstruction reconstruction;
  ReconstructionStats stats;
};

// Full incremental loop on precomputed features and matches. `images` are the
// single-channel inputs, used for point colors.
ReconstructResult ReconstructFromFeatures(const std::vector<FeatureSet>& features,
                                          const std::vector<MatchSet>& matches,
                                          const std::vector<Image>& images,
                                          const CameraIntrinsics& intr, const SfmOptions& options);

// Features, exhaustive matching and the incremental loop. A cache directory
// may be given to reuse features across runs.
ReconstructResult Reconstruct(const std::vector<Image>& images, const CameraIntrinsics& intr,
                              const SfmOptions& options, const FeatureCache* cache = nullptr);

// Detects features on every image, in parallel.
std::vector<FeatureSet> DetectAll(const std::vector<Image>& images, const SiftOptions& options,
                                  const FeatureCache* cache = nullptr);

// Asserts cheirality and the reprojection bound for every triangulated track.
// Returns the number of violating observations.
std::size_t CountInvariantViolations(const Reconstruction& recon, double max_reproj);

}  // namespace gastro
