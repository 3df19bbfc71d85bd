#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gastro/image.hpp"
#include "gastro/mesh.hpp"
#include "gastro/reconstruction.hpp"

namespace gastro {

struct TextureOptions {
  // Score = cos(angle)^angle_exponent / distance^distance_exponent.
  double angle_exponent = 1.0;
  double distance_exponent = 2.0;
  bool occlusion = true;
  // Largest atlas side in texels.
  int texel_budget = 8192;
  // Chart texels per projected source pixel, and the largest chart side.
  double texels_per_pixel = 1.0;
  int max_chart_side = 64;
};

inline constexpr int kNoView = -1;
inline constexpr int kGutter = 2;
inline constexpr Rgb kMagenta{255, 0, 255};

struct ViewAssignment {
  std::vector<int> view;  // image id per triangle, or kNoView
  std::vector<double> score;

  std::size_t NumAssigned() const;
};

// View score of a triangle with unit normal m and centroid g seen from c.
// Returns a negative value when the triangle faces away.
double ViewScore(const Vec3& normal, const Vec3& centroid, const Vec3& center,
                 const TextureOptions& options);

// True when all three vertices project inside the image with positive depth.
bool TriangleInView(const CameraIntrinsics& intr, const RigidPose& pose,
                    const std::array<Vec3, 3>& vertices);

// Best registered view per triangle: highest score among views that see the
// whole triangle, front-facing and (optionally) unoccluded. Ties keep the
// lowest image id.
ViewAssignment SelectViews(const TriangleMesh& mesh, const CameraIntrinsics& intr,
                           const std::map<int, RigidPose>& frames, const TextureOptions& options);

struct Chart {
  int triangle = -1;
  int view = kNoView;  // source view of every sampled texel
  int x = 0;           // top-left of the chart including gutters
  int y = 0;
  int width = 0;
  int height = 0;
  std::size_t sampled_texels = 0;
};

struct TexturedMesh {
  TriangleMesh mesh;
  std::vector<std::array<Vec2, 3>> uvs;  // per triangle corner, v pointing up
  Image atlas;                           // RGB
  ViewAssignment assignment;
  std::vector<Chart> charts;             // one per assigned triangle, plus the marker chart
};

// Packs one chart per assigned triangle, sized from its projection into the
// assigned view, and fills it by sampling that view. Unassigned triangles map
// to a magenta marker chart. `images` is indexed by image id (RGB or gray).
// Throws kAtlasOverflow naming the side length that would fit.
TexturedMesh BakeAtlas(const TriangleMesh& mesh, const ViewAssignment& assignment,
                       const CameraIntrinsics& intr, const std::map<int, RigidPose>& frames,
                       const std::vector<Image>& images, const TextureOptions& options);

// Writes <stem>.obj, <stem>.mtl and the atlas PNG into dir.
void WriteTexturedObj(const std::filesystem::path& dir, const std::string& stem,
                      const TexturedMesh& textured, const std::string& atlas_name);

// Chart and assignment table for the viewer.
void WriteChartTable(const std::filesystem::path& path, const TexturedMesh& textured);

}  // namespace gastro
