#pragma once

#include <set>
#include <vector>

#include <Eigen/Core>

#include "gastro/reconstruction.hpp"

namespace gastro {

struct BundleAdjustOptions {
  double huber_delta = 2.0;
  double max_reproj = 4.0;
  int max_iterations = 50;
  double relative_tolerance = 1e-10;
  double initial_lambda = 1e-3;
  bool prune = true;
};

enum class BundleAdjustStatus { kConverged, kMaxIterations, kStalled };

struct BundleAdjustReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  // Cost after every accepted step, starting with the initial cost.
  std::vector<double> cost_history;
  int iterations = 0;
  std::size_t num_observations = 0;
  std::size_t pruned = 0;
  BundleAdjustStatus status = BundleAdjustStatus::kConverged;
};

// Which parameters take part. Frames in `variable_frames` are optimized
// (minus the gauge), every other registered frame observing a selected track
// is held constant. An empty track list means every triangulated track seen by
// a variable frame.
struct BundleAdjustScope {
  std::set<int> variable_frames;
  std::set<int> fixed_frames;
  std::vector<std::size_t> tracks;
  bool optimize_points = true;
};

// Scope covering all registered frames and triangulated tracks, with the
// reconstruction's gauge frames pinned.
BundleAdjustScope GlobalScope(const Reconstruction& recon, const std::set<int>& fixed = {});

// Huber loss on the squared residual norm.
double HuberCost(double squared_norm, double delta);

// Residual and analytic Jacobians of one observation with respect to the
// pose increment (rotation left-perturbation, translation) and the point.
struct ObservationLinearization {
  Vec2 residual;
  Eigen::Matrix<double, 2, 6> d_pose;
  Eigen::Matrix<double, 2, 3> d_point;
};
ObservationLinearization LinearizeObservation(const CameraIntrinsics& intr, const RigidPose& pose,
                                              const Vec3& point, const Vec2& observed);

// Applies a 6-vector (omega, delta_t) increment to a pose.
RigidPose RetractPose(const RigidPose& pose, const Eigen::Matrix<double, 6, 1>& delta);

// Sparse Levenberg-Marquardt with Schur elimination of the point blocks.
// Observations reprojecting beyond max_reproj after convergence are pruned.
BundleAdjustReport BundleAdjust(Reconstruction& recon, const BundleAdjustScope& scope,
                                const BundleAdjustOptions& options = {});

// Total robust cost of the observations in scope.
double BundleCost(const Reconstruction& recon, const BundleAdjustScope& scope, double huber_delta);

// Removes observations whose reprojection exceeds max_reproj or whose point
// lies behind the camera; tracks left with fewer than two registered
// observations lose their point. Returns the number of removed observations.
std::size_t PruneObservations(Reconstruction& recon, double max_reproj,
                              const std::vector<std::size_t>* tracks = nullptr);

}  // namespace gastro
