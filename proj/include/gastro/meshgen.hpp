#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "gastro/camera.hpp"
#include "gastro/mesh.hpp"
#include "gastro/poisson.hpp"

namespace gastro {

struct FilterParams {
  std::size_t n = 10000;
  double neighbor_fraction = 0.1;
  double sigma_multiplier = 2.0;

  void Validate() const;
};

struct FilterReport {
  std::vector<double> mean_dist_per_point;
  double global_mean = 0.0;
  double global_std = 0.0;
  double threshold = 0.0;
  std::size_t inlier_count = 0;
};

// ceil(count * fraction), robust to the representation error of the fraction.
std::size_t NeighborCount(std::size_t count, double fraction);

// Uniform sample of exactly n points without replacement, kept in input order.
PointCloud Downsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

// Single-pass statistical outlier removal: points whose mean distance to
// their ceil(N * fraction) nearest neighbours exceeds mean + sigma_multiplier * std
// (population std over all points) are removed.
PointCloud RemoveOutliers(const PointCloud& cloud, const FilterParams& params,
                          FilterReport* report = nullptr);

// PCA normals from the ceil(N * fraction) nearest neighbours. Rank-deficient
// neighbourhoods are flagged in normal_valid.
PointCloud EstimateNormals(const PointCloud& cloud, double fraction = 0.1);

// Flips each normal to face the nearest observing camera (the nearest camera
// overall when the point has no registered observer).
PointCloud OrientNormals(const PointCloud& cloud, const std::map<int, RigidPose>& frames);

struct MeshOptions {
  FilterParams filter;
  double normal_fraction = 0.1;
  PoissonOptions poisson;
  std::uint64_t seed = 42;
};

struct MeshResult {
  TriangleMesh mesh;
  FilterReport report;
  PointCloud oriented;
};

// Downsample, outlier removal, normals, orientation and Poisson in sequence.
MeshResult BuildMesh(const PointCloud& cloud, const std::map<int, RigidPose>& frames,
                     const MeshOptions& options);

}  // namespace gastro
