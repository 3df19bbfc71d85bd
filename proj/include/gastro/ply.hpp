#pragma once

#include <filesystem>

#include "gastro/mesh.hpp"

namespace gastro {

// Binary little-endian PLY with double x, y, z and uchar red, green, blue.
void WritePointCloudPly(const std::filesystem::path& path, const PointCloud& cloud);

// Binary little-endian PLY with double vertices and int triangle lists.
void WriteMeshPly(const std::filesystem::path& path, const TriangleMesh& mesh);

struct PlyData {
  PointCloud cloud;      // vertex positions and colors when present
  std::vector<Triangle> faces;
};

// Reads binary little-endian or ASCII PLY with float/double coordinates,
// optional uchar colors and optional triangle faces.
PlyData ReadPly(const std::filesystem::path& path);

}  // namespace gastro
