#include "gastro/bvh.hpp"

#include <algorithm>
#include <limits>

namespace gastro {

namespace {
constexpr std::size_t kLeafSize = 4;
}

TriangleBvh::TriangleBvh(const TriangleMesh& mesh) : mesh_(mesh) {
  order_.resize(mesh.triangles.size());
  centroids_.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < order_.size(); ++t) {
    order_[t] = t;
    centroids_[t] = mesh.Centroid(t);
  }
  if (!order_.empty()) Build(0, order_.size());
}

int TriangleBvh::Build(std::size_t begin, std::size_t end) {
  Node node;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  Vec3 clo = node.lo;
  Vec3 chi = node.hi;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& tri = mesh_.triangles[order_[i]];
    for (int k = 0; k < 3; ++k) {
      node.lo = node.lo.cwiseMin(mesh_.vertices[tri[k]]);
      node.hi = node.hi.cwiseMax(mesh_.vertices[tri[k]]);
    }
    clo = clo.cwiseMin(centroids_[order_[i]]);
    chi = chi.cwiseMax(centroids_[order_[i]]);
  }
  node.begin = begin;
  node.end = end;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) return id;
  Eigen::Index axis = 0;
  (chi - clo).maxCoeff(&axis);
  const auto a = static_cast<int>(axis);
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t x, std::size_t y) {
                     if (centroids_[x][a] != centroids_[y][a]) return centroids_[x][a] < centroids_[y][a];
                     return x < y;
                   });
  const int left = Build(begin, mid);
  const int right = Build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

bool RayBox(const Vec3& origin, const Vec3& inv_direction, const Vec3& lo, const Vec3& hi,
            double t_min, double t_max) {
  for (int a = 0; a < 3; ++a) {
    double t0 = (lo[a] - origin[a]) * inv_direction[a];
    double t1 = (hi[a] - origin[a]) * inv_direction[a];
    if (t0 > t1) std::swap(t0, t1);
    // NaN from 0 * inf means the ray lies in the slab plane; treat as inside.
    if (t0 == t0) t_min = std::max(t_min, t0);
    if (t1 == t1) t_max = std::min(t_max, t1);
    if (t_min > t_max) return false;
  }
  return true;
}

std::optional<double> TriangleBvh::IntersectTriangle(std::size_t t, const Vec3& origin,
                                                     const Vec3& direction) const {
  // Moller-Trumbore.
  const auto& tri = mesh_.triangles[t];
  const Vec3& v0 = mesh_.vertices[tri[0]];
  const Vec3 e1 = mesh_.vertices[tri[1]] - v0;
  const Vec3 e2 = mesh_.vertices[tri[2]] - v0;
  const Vec3 p = direction.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-300) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - v0;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = direction.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  return e2.dot(q) * inv;
}

std::optional<TriangleBvh::Hit> TriangleBvh::Intersect(const Vec3& origin, const Vec3& direction,
                                                       double t_min, double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv = direction.cwiseInverse();
  std::optional<Hit> best;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (!RayBox(origin, inv, node.lo, node.hi, t_min, t_max)) continue;
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const auto d = IntersectTriangle(order_[i], origin, direction);
        if (!d || !(*d > t_min) || !(*d < t_max)) continue;
        if (!best || *d < best->distance ||
            (*d == best->distance && order_[i] < best->triangle)) {
          best = Hit{order_[i], *d};
          t_max = std::nextafter(*d, std::numeric_limits<double>::infinity());
        }
      }
      continue;
    }
    stack.push_back(node.right);
    stack.push_back(node.left);
  }
  return best;
}

bool TriangleBvh::AnyHit(const Vec3& origin, const Vec3& direction, double t_min, double t_max,
                         std::ptrdiff_t ignore) const {
  if (nodes_.empty()) return false;
  const Vec3 inv = direction.cwiseInverse();
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (!RayBox(origin, inv, node.lo, node.hi, t_min, t_max)) continue;
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        if (static_cast<std::ptrdiff_t>(order_[i]) == ignore) continue;
        const auto d = IntersectTriangle(order_[i], origin, direction);
        if (d && *d > t_min && *d < t_max) return true;
      }
      continue;
    }
    stack.push_back(node.right);
    stack.push_back(node.left);
  }
  return false;
}

}  // namespace gastro
