#include "gastro/meshgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "gastro/error.hpp"
#include "gastro/kdtree.hpp"
#include "gastro/parallel.hpp"

namespace gastro {

void FilterParams::Validate() const {
  GASTRO_CHECK(n >= 10, ErrorKind::kConfig, "filter n must be at least 10");
  GASTRO_CHECK(neighbor_fraction > 0.0 && neighbor_fraction < 1.0, ErrorKind::kConfig,
               "neighbor_fraction must lie in (0, 1)");
  GASTRO_CHECK(sigma_multiplier > 0.0, ErrorKind::kConfig, "sigma_multiplier must be positive");
}

std::size_t NeighborCount(std::size_t count, double fraction) {
  const double raw = static_cast<double>(count) * fraction;
  return static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
}

PointCloud Downsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  GASTRO_CHECK(n >= 1, ErrorKind::kInvalidInput, "downsample target must be positive");
  if (cloud.size() <= n) return cloud;
  std::vector<std::size_t> idx(cloud.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return cloud.Subset(idx);
}

PointCloud RemoveOutliers(const PointCloud& cloud, const FilterParams& params,
                          FilterReport* report) {
  GASTRO_CHECK(cloud.size() >= 10, ErrorKind::kInvalidInput,
               "outlier removal needs at least 10 points");
  const std::size_t k = NeighborCount(cloud.size(), params.neighbor_fraction);
  GASTRO_CHECK(k >= 1 && cloud.size() >= k + 1, ErrorKind::kInvalidInput,
               "outlier removal needs more points than neighbours");
  const KdTree tree(cloud.points);
  FilterReport rep;
  rep.mean_dist_per_point.resize(cloud.size());
  ParallelFor(0, cloud.size(), [&](std::size_t i) {
    const auto nn = tree.Nearest(cloud.points[i], k, static_cast<std::ptrdiff_t>(i));
    double sum = 0.0;
    for (const auto& [d, j] : nn) sum += d;
    rep.mean_dist_per_point[i] = sum / static_cast<double>(k);
  });
  const double count = static_cast<double>(cloud.size());
  double sum = 0.0;
  for (const double x : rep.mean_dist_per_point) sum += x;
  rep.global_mean = sum / count;
  double var = 0.0;
  for (const double x : rep.mean_dist_per_point) var += (x - rep.global_mean) * (x - rep.global_mean);
  rep.global_std = std::sqrt(var / count);
  rep.threshold = rep.global_mean + params.sigma_multiplier * rep.global_std;

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!(rep.mean_dist_per_point[i] > rep.threshold)) keep.push_back(i);
  }
  rep.inlier_count = keep.size();
  if (report) *report = std::move(rep);
  return cloud.Subset(keep);
}

PointCloud EstimateNormals(const PointCloud& cloud, double fraction) {
  GASTRO_CHECK(cloud.size() >= 30, ErrorKind::kInvalidInput,
               "normal estimation needs at least 30 points, got " + std::to_string(cloud.size()));
  const std::size_t k = std::max<std::size_t>(NeighborCount(cloud.size(), fraction), 3);
  const KdTree tree(cloud.points);
  PointCloud out = cloud;
  out.normals.assign(cloud.size(), Vec3::UnitZ());
  out.normal_valid.assign(cloud.size(), 0);
  ParallelFor(0, cloud.size(), [&](std::size_t i) {
    const auto nn = tree.Nearest(cloud.points[i], k, static_cast<std::ptrdiff_t>(i));
    Vec3 mean = Vec3::Zero();
    for (const auto& [d, j] : nn) mean += cloud.points[j];
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& [d, j] : nn) {
      const Vec3 q = cloud.points[j] - mean;
      cov += q * q.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();
    if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) return;
    out.normals[i] = eig.eigenvectors().col(0).normalized();
    out.normal_valid[i] = 1;
  });
  return out;
}

PointCloud OrientNormals(const PointCloud& cloud, const std::map<int, RigidPose>& frames) {
  GASTRO_CHECK(!frames.empty(), ErrorKind::kInvalidInput,
               "normal orientation needs at least one camera");
  GASTRO_CHECK(cloud.HasNormals(), ErrorKind::kInvalidInput, "cloud has no normals");
  std::map<int, Vec3> centers;
  for (const auto& [id, pose] : frames) centers[id] = pose.Center();
  PointCloud out = cloud;
  ParallelFor(0, cloud.size(), [&](std::size_t i) {
    const Vec3& p = cloud.points[i];
    double best = std::numeric_limits<double>::infinity();
    Vec3 center = Vec3::Zero();
    auto consider = [&](const Vec3& c) {
      const double d = (c - p).squaredNorm();
      if (d < best) {
        best = d;
        center = c;
      }
    };
    if (!cloud.observers.empty()) {
      for (const int id : cloud.observers[i]) {
        const auto it = centers.find(id);
        if (it != centers.end()) consider(it->second);
      }
    }
    if (!std::isfinite(best)) {
      for (const auto& [id, c] : centers) consider(c);
    }
    if (out.normals[i].dot(center - p) < 0.0) out.normals[i] = -out.normals[i];
  });
  return out;
}

MeshResult BuildMesh(const PointCloud& cloud, const std::map<int, RigidPose>& frames,
                     const MeshOptions& options) {
  options.filter.Validate();
  MeshResult result;
  const PointCloud sampled = Downsample(cloud, options.filter.n, options.seed);
  const PointCloud filtered = RemoveOutliers(sampled, options.filter, &result.report);
  const PointCloud with_normals = EstimateNormals(filtered, options.normal_fraction);
  result.oriented = OrientNormals(with_normals, frames);
  result.mesh = PoissonReconstruct(result.oriented, options.poisson);
  ComputeVertexNormals(result.mesh);
  return result;
}

}  // namespace gastro
