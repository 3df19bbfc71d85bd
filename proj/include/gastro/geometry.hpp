#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gastro/camera.hpp"
#include "gastro/types.hpp"

namespace gastro {

// Planar homography from >= 4 point pairs by normalized DLT. Destinations may
// be any homogeneous 3-vectors (pixels with z = 1, or unit bearings).
Mat3 FitHomography(std::span<const Vec2> source, std::span<const Vec3> destination);

// Essential matrix from >= 8 bearing pairs satisfying b2^T E b1 = 0, with the
// singular values projected to (1, 1, 0).
std::optional<Mat3> EssentialEightPoint(std::span<const Vec3> bearings1,
                                        std::span<const Vec3> bearings2);

// Squared first-order epipolar error on the unit sphere (radians^2): the
// algebraic residual normalised by its gradient in the tangent planes.
double SampsonErrorSq(const Mat3& essential, const Vec3& bearing1, const Vec3& bearing2);

// Four (R, t) candidates with unit t for x2 = R x1 + t.
std::array<RigidPose, 4> DecomposeEssential(const Mat3& essential);

// Two-ray midpoint triangulation; returns depths along each ray too.
struct TwoViewPoint {
  Vec3 point;
  double depth1 = 0.0;
  double depth2 = 0.0;
};
std::optional<TwoViewPoint> TriangulateTwoRays(const Vec3& center1, const Vec3& dir1,
                                               const Vec3& center2, const Vec3& dir2);

// Least-squares point closest to all rays (unit directions in world frame).
std::optional<Vec3> TriangulateMidpoint(std::span<const Vec3> centers,
                                        std::span<const Vec3> directions);

// Largest pairwise angle between the rays from the centers to the point.
double MaxTriangulationAngle(std::span<const Vec3> centers, const Vec3& point);

// Grunert's three-point absolute pose solution. Up to four world-to-camera
// poses mapping the world points onto the bearings.
std::vector<RigidPose> SolveP3P(const std::array<Vec3, 3>& bearings,
                                const std::array<Vec3, 3>& world_points);

// Real roots of a4 x^4 + a3 x^3 + a2 x^2 + a1 x + a0.
std::vector<double> SolveQuartic(double a4, double a3, double a2, double a1, double a0);

// Least-squares similarity truth ~ scale * rotation * estimate + translation
// (Umeyama). When fix_scale is set, scale is pinned to 1.
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 Apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};
std::optional<Similarity> EstimateSimilarity(std::span<const Vec3> source,
                                             std::span<const Vec3> target,
                                             bool fix_scale = false);

// RANSAC iteration count for the given inlier ratio, sample size and confidence.
std::size_t RansacIterations(double inlier_ratio, int sample_size, double confidence,
                             std::size_t max_iterations);

// Draws sample_size distinct indices in [0, n).
std::vector<std::size_t> SampleDistinct(std::size_t n, std::size_t sample_size,
                                        std::mt19937_64& rng);

}  // namespace gastro
