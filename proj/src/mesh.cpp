#include "gastro/mesh.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace gastro {

PointCloud PointCloud::Subset(const std::vector<std::size_t>& indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  for (const std::size_t i : indices) {
    out.points.push_back(points[i]);
    if (!colors.empty()) out.colors.push_back(colors[i]);
    if (!normals.empty()) {
      out.normals.push_back(normals[i]);
      out.normal_valid.push_back(normal_valid[i]);
    }
    if (!observers.empty()) out.observers.push_back(observers[i]);
  }
  return out;
}

PointCloud CloudFromReconstruction(const Reconstruction& recon) {
  PointCloud cloud;
  for (const auto& track : recon.tracks) {
    if (!track.point3d) continue;
    cloud.points.push_back(*track.point3d);
    cloud.colors.push_back(track.color.value_or(Rgb{128, 128, 128}));
    std::vector<int> ids;
    for (const auto& o : track.observations) {
      if (recon.IsRegistered(o.image)) ids.push_back(o.image);
    }
    cloud.observers.push_back(std::move(ids));
  }
  return cloud;
}

Vec3 TriangleMesh::FaceNormal(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec3 n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double TriangleMesh::FaceArea(std::size_t t) const {
  const auto& tri = triangles[t];
  return 0.5 *
         (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
}

Vec3 TriangleMesh::Centroid(std::size_t t) const {
  const auto& tri = triangles[t];
  return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
}

bool IsClosedManifold(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) return false;
  // Directed edge counts: each must appear once, with its reverse once.
  std::map<std::pair<int, int>, int> directed;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      if (tri[k] == tri[(k + 1) % 3]) return false;
      if (++directed[{tri[k], tri[(k + 1) % 3]}] > 1) return false;
    }
  }
  for (const auto& [edge, count] : directed) {
    if (!directed.count({edge.second, edge.first})) return false;
  }
  return true;
}

long EulerCharacteristic(const TriangleMesh& mesh) {
  std::vector<bool> used(mesh.vertices.size(), false);
  std::map<std::pair<int, int>, int> edges;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      used[tri[k]] = true;
      const int a = tri[k];
      const int b = tri[(k + 1) % 3];
      edges[{std::min(a, b), std::max(a, b)}] = 1;
    }
  }
  const long v = std::count(used.begin(), used.end(), true);
  return v - static_cast<long>(edges.size()) + static_cast<long>(mesh.triangles.size());
}

TriangleMesh LargestComponent(const TriangleMesh& mesh) {
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& tri : mesh.triangles) {
    for (int k = 1; k < 3; ++k) {
      const int a = find(tri[0]);
      const int b = find(tri[k]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::map<int, std::size_t> counts;
  for (const auto& tri : mesh.triangles) ++counts[find(tri[0])];
  int best = -1;
  std::size_t best_count = 0;
  for (const auto& [root, count] : counts) {
    if (count > best_count) {
      best_count = count;
      best = root;
    }
  }
  TriangleMesh out;
  std::vector<int> remap(mesh.vertices.size(), -1);
  for (const auto& tri : mesh.triangles) {
    if (find(tri[0]) != best) continue;
    Triangle t;
    for (int k = 0; k < 3; ++k) {
      if (remap[tri[k]] < 0) {
        remap[tri[k]] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[tri[k]]);
        if (!mesh.normals.empty()) out.normals.push_back(mesh.normals[tri[k]]);
      }
      t[k] = remap[tri[k]];
    }
    out.triangles.push_back(t);
  }
  return out;
}

void ComputeVertexNormals(TriangleMesh& mesh) {
  mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
  for (const auto& tri : mesh.triangles) {
    const Vec3 n =
        (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    for (int k = 0; k < 3; ++k) mesh.normals[tri[k]] += n;
  }
  for (auto& n : mesh.normals) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
  }
}

TriangleMesh FlipWinding(const TriangleMesh& mesh) {
  TriangleMesh out = mesh;
  for (auto& tri : out.triangles) std::swap(tri[1], tri[2]);
  for (auto& n : out.normals) n = -n;
  return out;
}

}  // namespace gastro
