#include "gastro/texturing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "gastro/bvh.hpp"
#include "gastro/error.hpp"
#include "gastro/image_io.hpp"
#include "gastro/obj.hpp"
#include "gastro/parallel.hpp"

namespace gastro {

std::size_t ViewAssignment::NumAssigned() const {
  return static_cast<std::size_t>(std::count_if(view.begin(), view.end(),
                                                [](int v) { return v != kNoView; }));
}

double ViewScore(const Vec3& normal, const Vec3& centroid, const Vec3& center,
                 const TextureOptions& options) {
  const Vec3 to_camera = center - centroid;
  const double facing = normal.dot(to_camera);
  if (!(facing > 0.0)) return -1.0;
  const double d = to_camera.norm();
  const double cosine = facing / d;
  if (options.angle_exponent == 1.0 && options.distance_exponent == 2.0) {
    return cosine / (d * d);
  }
  return std::pow(cosine, options.angle_exponent) / std::pow(d, options.distance_exponent);
}

bool TriangleInView(const CameraIntrinsics& intr, const RigidPose& pose,
                    const std::array<Vec3, 3>& vertices) {
  for (const auto& v : vertices) {
    const Vec3 pc = pose.Apply(v);
    if (!(pc.z() > 0.0)) return false;
    const auto px = TryProject(intr, pc);
    if (!px) return false;
    if (px->x() < 0.0 || px->y() < 0.0 || px->x() > intr.width - 1 || px->y() > intr.height - 1) {
      return false;
    }
  }
  return true;
}

ViewAssignment SelectViews(const TriangleMesh& mesh, const CameraIntrinsics& intr,
                           const std::map<int, RigidPose>& frames, const TextureOptions& options) {
  ViewAssignment out;
  out.view.assign(mesh.triangles.size(), kNoView);
  out.score.assign(mesh.triangles.size(), 0.0);
  std::optional<TriangleBvh> bvh;
  if (options.occlusion) bvh.emplace(mesh);
  std::vector<std::pair<int, Vec3>> centers;
  for (const auto& [id, pose] : frames) centers.emplace_back(id, pose.Center());

  ParallelFor(0, mesh.triangles.size(), [&](std::size_t t) {
    const Vec3 normal = mesh.FaceNormal(t);
    if (normal.isZero()) return;
    const Vec3 g = mesh.Centroid(t);
    const auto& tri = mesh.triangles[t];
    const std::array<Vec3, 3> verts{mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                                    mesh.vertices[tri[2]]};
    std::size_t ci = 0;
    for (const auto& [id, pose] : frames) {
      const Vec3& c = centers[ci++].second;
      const double score = ViewScore(normal, g, c, options);
      if (score < 0.0) continue;
      if (out.view[t] != kNoView && !(score > out.score[t])) continue;
      if (!TriangleInView(intr, pose, verts)) continue;
      if (bvh) {
        const Vec3 dir = g - c;
        const double dist = dir.norm();
        if (bvh->AnyHit(c, dir / dist, 0.0, dist * (1.0 - 1e-6), static_cast<std::ptrdiff_t>(t))) {
          continue;
        }
      }
      out.view[t] = id;
      out.score[t] = score;
    }
  });
  return out;
}

namespace {

struct ChartLayout {
  std::array<Vec2, 3> local;  // chart coordinates of the corners, texel units
  int width = 0;
  int height = 0;
};

ChartLayout LayoutChart(const std::array<Vec2, 3>& pixels, const TextureOptions& options) {
  Vec2 lo = pixels[0].cwiseMin(pixels[1]).cwiseMin(pixels[2]);
  Vec2 hi = pixels[0].cwiseMax(pixels[1]).cwiseMax(pixels[2]);
  const Vec2 extent = (hi - lo) * options.texels_per_pixel;
  double scale = options.texels_per_pixel;
  const double inner_max = options.max_chart_side - 2 * kGutter - 1;
  if (extent.maxCoeff() > inner_max) scale *= inner_max / extent.maxCoeff();
  ChartLayout layout;
  for (int k = 0; k < 3; ++k) {
    layout.local[k] = (pixels[k] - lo) * scale + Vec2::Constant(kGutter + 0.5);
  }
  const Vec2 size = (hi - lo) * scale;
  layout.width = std::max(2, static_cast<int>(std::ceil(size.x())) + 1) + 2 * kGutter;
  layout.height = std::max(2, static_cast<int>(std::ceil(size.y())) + 1) + 2 * kGutter;
  return layout;
}

// Shelf packing in a square of the given side; returns false on overflow.
bool PackShelves(std::vector<Chart>& charts, const std::vector<std::size_t>& order, int side) {
  int x = 0;
  int y = 0;
  int shelf = 0;
  for (const std::size_t i : order) {
    Chart& c = charts[i];
    if (c.width > side) return false;
    if (x + c.width > side) {
      y += shelf;
      x = 0;
      shelf = 0;
    }
    if (y + c.height > side) return false;
    c.x = x;
    c.y = y;
    x += c.width;
    shelf = std::max(shelf, c.height);
  }
  return true;
}

std::array<double, 3> Barycentric(const std::array<Vec2, 3>& tri, const Vec2& p) {
  const Vec2 v0 = tri[1] - tri[0];
  const Vec2 v1 = tri[2] - tri[0];
  const Vec2 v2 = p - tri[0];
  const double den = v0.x() * v1.y() - v1.x() * v0.y();
  if (std::abs(den) < 1e-12) return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  const double b1 = (v2.x() * v1.y() - v1.x() * v2.y()) / den;
  const double b2 = (v0.x() * v2.y() - v2.x() * v0.y()) / den;
  return {1.0 - b1 - b2, b1, b2};
}

Rgb SampleRgb(const Image& image, Vec2 pixel) {
  pixel.x() = std::clamp(pixel.x(), 0.0, static_cast<double>(image.width - 1));
  pixel.y() = std::clamp(pixel.y(), 0.0, static_cast<double>(image.height - 1));
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    double v = 0.0;
    SampleBilinear(image, pixel.x(), pixel.y(), image.channels == 3 ? c : 0, &v);
    out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

}  // namespace

TexturedMesh BakeAtlas(const TriangleMesh& mesh, const ViewAssignment& assignment,
                       const CameraIntrinsics& intr, const std::map<int, RigidPose>& frames,
                       const std::vector<Image>& images, const TextureOptions& options) {
  GASTRO_CHECK(assignment.view.size() == mesh.triangles.size(), ErrorKind::kInvalidInput,
               "assignment does not match the mesh");
  std::string missing;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const int v = assignment.view[t];
    if (v == kNoView) continue;
    if (v < 0 || static_cast<std::size_t>(v) >= images.size() || images[v].empty() ||
        !frames.count(v)) {
      missing = std::to_string(v);
      break;
    }
  }
  GASTRO_CHECK(missing.empty(), ErrorKind::kInvalidInput,
               "no image or pose for assigned view " + missing);

  TexturedMesh out;
  out.mesh = mesh;
  out.assignment = assignment;
  out.uvs.resize(mesh.triangles.size());

  // Chart 0 is the magenta marker shared by unassigned triangles.
  std::vector<ChartLayout> layouts(1);
  layouts[0].width = layouts[0].height = 2 + 2 * kGutter;
  layouts[0].local = {Vec2(kGutter + 0.5, kGutter + 0.5), Vec2(kGutter + 1.5, kGutter + 0.5),
                      Vec2(kGutter + 0.5, kGutter + 1.5)};
  out.charts.push_back(Chart{-1, kNoView, 0, 0, layouts[0].width, layouts[0].height, 0});
  std::vector<int> chart_of(mesh.triangles.size(), 0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const int v = assignment.view[t];
    if (v == kNoView) continue;
    const RigidPose& pose = frames.at(v);
    std::array<Vec2, 3> pixels;
    for (int k = 0; k < 3; ++k) {
      pixels[k] = Project(intr, pose.Apply(mesh.vertices[mesh.triangles[t][k]]));
    }
    const ChartLayout layout = LayoutChart(pixels, options);
    chart_of[t] = static_cast<int>(out.charts.size());
    out.charts.push_back(Chart{static_cast<int>(t), v, 0, 0, layout.width, layout.height, 0});
    layouts.push_back(layout);
  }

  std::vector<std::size_t> order(out.charts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin() + 1, order.end(), [&](std::size_t a, std::size_t b) {
    if (out.charts[a].height != out.charts[b].height) {
      return out.charts[a].height > out.charts[b].height;
    }
    return out.charts[a].width > out.charts[b].width;
  });
  int side = 64;
  while (!PackShelves(out.charts, order, side)) {
    if (side >= (1 << 16)) {
      throw Error(ErrorKind::kAtlasOverflow, "charts do not fit a 65536 texel atlas");
    }
    side *= 2;
  }
  GASTRO_CHECK(side <= options.texel_budget, ErrorKind::kAtlasOverflow,
               "atlas needs a texel budget of " + std::to_string(side) + ", budget is " +
                   std::to_string(options.texel_budget));

  out.atlas = Image(side, side, 3);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) out.atlas.at(x, y, c) = kMagenta[c];
    }
  }

  ParallelFor(1, out.charts.size(), [&](std::size_t ci) {
    Chart& chart = out.charts[ci];
    const ChartLayout& layout = layouts[ci];
    const auto& tri = mesh.triangles[chart.triangle];
    const RigidPose& pose = frames.at(chart.view);
    const Image& image = images[chart.view];
    for (int j = 0; j < chart.height; ++j) {
      for (int i = 0; i < chart.width; ++i) {
        auto bary = Barycentric(layout.local, Vec2(i + 0.5, j + 0.5));
        // Gutter texels take the colour of the nearest point on the triangle.
        double sum = 0.0;
        for (double& b : bary) {
          b = std::max(b, 0.0);
          sum += b;
        }
        for (double& b : bary) b /= sum;
        const Vec3 surface = bary[0] * mesh.vertices[tri[0]] + bary[1] * mesh.vertices[tri[1]] +
                             bary[2] * mesh.vertices[tri[2]];
        const Vec3 pc = pose.Apply(surface);
        const auto px = TryProject(intr, pc);
        const Rgb rgb = px ? SampleRgb(image, *px) : kMagenta;
        for (int c = 0; c < 3; ++c) out.atlas.at(chart.x + i, chart.y + j, c) = rgb[c];
        ++chart.sampled_texels;
      }
    }
  });

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Chart& chart = out.charts[chart_of[t]];
    const ChartLayout& layout = layouts[chart_of[t]];
    for (int k = 0; k < 3; ++k) {
      out.uvs[t][k] = Vec2((chart.x + layout.local[k].x()) / side,
                           1.0 - (chart.y + layout.local[k].y()) / side);
    }
  }
  return out;
}

void WriteTexturedObj(const std::filesystem::path& dir, const std::string& stem,
                      const TexturedMesh& textured, const std::string& atlas_name) {
  ObjData obj;
  obj.vertices = textured.mesh.vertices;
  obj.faces = textured.mesh.triangles;
  obj.mtllib = stem + ".mtl";
  obj.material = "atlas";
  for (std::size_t t = 0; t < textured.uvs.size(); ++t) {
    const int base = static_cast<int>(obj.texcoords.size());
    for (int k = 0; k < 3; ++k) obj.texcoords.push_back(textured.uvs[t][k]);
    obj.face_texcoords.push_back({base, base + 1, base + 2});
  }
  WriteObj(dir / (stem + ".obj"), obj);
  WriteMtl(dir / (stem + ".mtl"), obj.material, atlas_name);
  WritePng(dir / atlas_name, textured.atlas);
}

void WriteChartTable(const std::filesystem::path& path, const TexturedMesh& textured) {
  nlohmann::json j;
  j["atlas_width"] = textured.atlas.width;
  j["atlas_height"] = textured.atlas.height;
  j["assignment"] = textured.assignment.view;
  auto& charts = j["charts"] = nlohmann::json::array();
  for (const auto& c : textured.charts) {
    charts.push_back({{"triangle", c.triangle},
                      {"view", c.view},
                      {"x", c.x},
                      {"y", c.y},
                      {"width", c.width},
                      {"height", c.height}});
  }
  std::ofstream out(path, std::ios::binary);
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(1) << "\n";
}

}  // namespace gastro
