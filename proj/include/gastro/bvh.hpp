#pragma once

#include <optional>
#include <vector>

#include "gastro/mesh.hpp"

namespace gastro {

// Bounding-volume hierarchy over the triangles of a mesh for ray queries.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriangleMesh& mesh);

  struct Hit {
    std::size_t triangle = 0;
    double distance = 0.0;
  };

  // Nearest intersection along origin + t * direction (unit) with t in (t_min, t_max).
  std::optional<Hit> Intersect(const Vec3& origin, const Vec3& direction, double t_min,
                               double t_max) const;

  // True when some triangle other than `ignore` is hit with t in (t_min, t_max).
  bool AnyHit(const Vec3& origin, const Vec3& direction, double t_min, double t_max,
              std::ptrdiff_t ignore = -1) const;

 private:
  struct Node {
    Vec3 lo;
    Vec3 hi;
    int left = -1;
    int right = -1;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  int Build(std::size_t begin, std::size_t end);
  std::optional<double> IntersectTriangle(std::size_t t, const Vec3& origin,
                                          const Vec3& direction) const;

  const TriangleMesh& mesh_;
  std::vector<std::size_t> order_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

// Ray/box slab test; returns false when the ray misses [t_min, t_max].
bool RayBox(const Vec3& origin, const Vec3& inv_direction, const Vec3& lo, const Vec3& hi,
            double t_min, double t_max);

}  // namespace gastro
