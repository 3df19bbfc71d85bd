#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gastro/mesh.hpp"

namespace gastro {

// Triangle-only Wavefront OBJ content with optional texture coordinates.
struct ObjData {
  std::vector<Vec3> vertices;
  std::vector<Vec2> texcoords;
  std::vector<Triangle> faces;
  std::vector<Triangle> face_texcoords;  // empty or parallel to faces
  std::string mtllib;
  std::string material;
};

void WriteObj(const std::filesystem::path& path, const ObjData& obj);
// Reads v, vt, f (triangles, 1-based, optional /vt/vn) plus mtllib and usemtl.
ObjData ReadObj(const std::filesystem::path& path);

// Material file referencing a diffuse texture.
void WriteMtl(const std::filesystem::path& path, const std::string& material,
              const std::string& texture);

TriangleMesh ToMesh(const ObjData& obj);

// Shortest round-trip decimal text of a double.
std::string FormatDouble(double value);

}  // namespace gastro
