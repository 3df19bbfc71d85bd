#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gastro/reconstruction.hpp"
#include "gastro/types.hpp"

namespace gastro {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;                  // empty or parallel to points
  std::vector<Vec3> normals;                // empty or parallel to points
  std::vector<std::uint8_t> normal_valid;   // parallel to normals
  std::vector<std::vector<int>> observers;  // empty or parallel: observing image ids

  std::size_t size() const { return points.size(); }
  bool HasNormals() const { return !normals.empty(); }

  // Copy restricted to the given indices, in that order.
  PointCloud Subset(const std::vector<std::size_t>& indices) const;
};

// Triangulated cloud of a reconstruction, with colors and observing images.
PointCloud CloudFromReconstruction(const Reconstruction& recon);

using Triangle = std::array<int, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vec3> normals;  // optional per-vertex

  Vec3 FaceNormal(std::size_t t) const;  // unit, right-handed winding
  double FaceArea(std::size_t t) const;
  Vec3 Centroid(std::size_t t) const;
};

// Every edge shared by exactly two triangles, with opposite orientation.
bool IsClosedManifold(const TriangleMesh& mesh);
long EulerCharacteristic(const TriangleMesh& mesh);

// Largest edge-connected component, vertices reindexed in first-use order.
TriangleMesh LargestComponent(const TriangleMesh& mesh);

// Area-weighted vertex normals.
void ComputeVertexNormals(TriangleMesh& mesh);

// Reverses the winding of every triangle.
TriangleMesh FlipWinding(const TriangleMesh& mesh);

}  // namespace gastro
