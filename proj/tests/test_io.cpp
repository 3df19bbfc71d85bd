#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "gastro/config.hpp"
#include "gastro/image_io.hpp"
#include "gastro/manifest.hpp"
#include "gastro/obj.hpp"
#include "gastro/ply.hpp"
#include "support.hpp"

namespace gastro {
namespace {

using testing::ThrownKind;

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string ConfigError(const std::string& text) {
  try {
    ParseConfigText(text, "cfg.toml");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    return e.what();
  }
  return "";
}

TEST(Io, PngRoundTrip) {
  const auto dir = testing::TempDir("io_png");
  std::mt19937_64 rng(1);
  for (int channels : {1, 3}) {
    Image img(17, 9, channels);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng());
    WritePng(dir / "a.png", img);
    EXPECT_EQ(ReadPng(dir / "a.png"), img);
  }
  EXPECT_EQ(ThrownKind([&] { ReadPng(dir / "missing.png"); }), ErrorKind::kIo);
}

TEST(Io, JpegWrites) {
  const auto dir = testing::TempDir("io_jpeg");
  WriteJpeg(dir / "a.jpg", Image(32, 16, 3, 128), 90);
  std::ifstream in(dir / "a.jpg", std::ios::binary);
  unsigned char magic[2] = {0, 0};
  in.read(reinterpret_cast<char*>(magic), 2);
  EXPECT_EQ(magic[0], 0xFF);
  EXPECT_EQ(magic[1], 0xD8);
}

TEST(Io, PointCloudPlyRoundTrip) {
  const auto dir = testing::TempDir("io_ply");
  PointCloud c;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    c.points.push_back(testing::RandomUnit(rng) * 3.7);
    c.colors.push_back({static_cast<std::uint8_t>(i), 7, static_cast<std::uint8_t>(200 - i)});
  }
  WritePointCloudPly(dir / "c.ply", c);
  const PlyData back = ReadPly(dir / "c.ply");
  EXPECT_EQ(back.cloud.points, c.points);
  EXPECT_EQ(back.cloud.colors, c.colors);
  EXPECT_TRUE(back.faces.empty());
}

TEST(Io, MeshPlyRoundTrip) {
  const auto dir = testing::TempDir("io_mesh_ply");
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1.0 / 3.0)};
  m.triangles = {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}};
  WriteMeshPly(dir / "m.ply", m);
  const PlyData back = ReadPly(dir / "m.ply");
  EXPECT_EQ(back.cloud.points, m.vertices);
  EXPECT_EQ(back.faces, m.triangles);
}

TEST(Io, AsciiPlyAccepted) {
  const auto dir = testing::TempDir("io_ascii_ply");
  WriteText(dir / "a.ply",
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
            "property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
            "end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  const PlyData back = ReadPly(dir / "a.ply");
  ASSERT_EQ(back.cloud.size(), 3u);
  EXPECT_EQ(back.cloud.points[1], Vec3(1, 0, 0));
  ASSERT_EQ(back.faces.size(), 1u);
  EXPECT_EQ(back.faces[0], (Triangle{0, 1, 2}));
}

TEST(Io, ObjRoundTrip) {
  const auto dir = testing::TempDir("io_obj");
  ObjData obj;
  obj.vertices = {Vec3(0.1, 0.2, 0.3), Vec3(1.0 / 3.0, 0, 0), Vec3(0, 1e-17, 2)};
  obj.texcoords = {Vec2(0, 0), Vec2(1, 0), Vec2(0.25, 0.75)};
  obj.faces = {{0, 1, 2}};
  obj.face_texcoords = {{2, 1, 0}};
  obj.mtllib = "m.mtl";
  obj.material = "skin";
  WriteObj(dir / "a.obj", obj);
  const ObjData back = ReadObj(dir / "a.obj");
  EXPECT_EQ(back.vertices, obj.vertices);
  EXPECT_EQ(back.texcoords, obj.texcoords);
  EXPECT_EQ(back.faces, obj.faces);
  EXPECT_EQ(back.face_texcoords, obj.face_texcoords);
  EXPECT_EQ(back.mtllib, "m.mtl");
  EXPECT_EQ(back.material, "skin");
  EXPECT_EQ(std::stod(FormatDouble(0.1)), 0.1);
}

TEST(Io, IntrinsicsJsonRoundTrip) {
  const auto dir = testing::TempDir("io_intr");
  const CameraIntrinsics intr = testing::TestIntrinsics();
  WriteIntrinsicsJson(dir / "i.json", intr);
  const CameraIntrinsics back = ReadIntrinsicsJson(dir / "i.json");
  EXPECT_EQ(back.focal_x, intr.focal_x);
  EXPECT_EQ(back.focal_y, intr.focal_y);
  EXPECT_EQ(back.principal_x, intr.principal_x);
  EXPECT_EQ(back.k, intr.k);
  EXPECT_EQ(back.width, intr.width);
  WriteText(dir / "bad.json", R"({"fx": -1, "fy": 1, "cx": 0, "cy": 0, "k": [0,0,0,0], "width": 10, "height": 10})");
  EXPECT_TRUE(ThrownKind([&] { ReadIntrinsicsJson(dir / "bad.json"); }).has_value());
}

TEST(Io, CamerasManifestRoundTrip) {
  const auto dir = testing::TempDir("io_cameras");
  Reconstruction recon = testing::SyntheticScene(5, 40, 3);
  recon.frames.erase(3);
  recon.frame_indices = {10, 11, 12, 13, 14};
  const auto m = MakeCamerasManifest(recon, {"a.png", "b.png", "c.png", "d.png", "e.png"});
  ASSERT_EQ(m.frames.size(), 4u);
  EXPECT_EQ(m.input_images, 5u);
  WriteCamerasJson(dir / "cameras.json", m);
  const auto back = ReadCamerasJson(dir / "cameras.json");
  ASSERT_EQ(back.frames.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& e = back.frames[i];
    const RigidPose& truth = recon.frames.at(e.id);
    EXPECT_EQ(e.frame_index, recon.frame_indices[e.id]);
    EXPECT_LT((e.Pose().rotation - truth.rotation).norm(), 1e-12);
    EXPECT_LT((e.Pose().translation - truth.translation).norm(), 1e-12);
  }
  EXPECT_EQ(back.frames[3].image, "e.png");
  const auto stats = StatsFromManifest(back);
  EXPECT_EQ(stats.reconstructed_images, 4u);
  EXPECT_DOUBLE_EQ(stats.reconstructed_pct, ComputeStats(recon).reconstructed_pct);
}

TEST(Io, PosesJsonRoundTrip) {
  const auto dir = testing::TempDir("io_poses");
  std::mt19937_64 rng(4);
  std::vector<RigidPose> poses(6);
  for (auto& p : poses) {
    p.rotation = testing::RandomRotation(rng);
    p.translation = testing::RandomUnit(rng);
  }
  WritePosesJson(dir / "p.json", poses);
  const auto back = ReadPosesJson(dir / "p.json");
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    EXPECT_LT((back[i].rotation - poses[i].rotation).norm(), 1e-12);
    EXPECT_LT((back[i].translation - poses[i].translation).norm(), 1e-12);
  }
}

TEST(Io, ReconstructionDirectoryRoundTrip) {
  const auto dir = testing::TempDir("io_recon");
  Reconstruction recon = testing::SyntheticScene(4, 30, 5);
  recon.image_names = {"w.png", "x.png", "y.png", "z.png"};
  recon.tracks[3].point3d.reset();
  recon.tracks[4].color = Rgb{1, 2, 3};
  SaveReconstruction(dir, recon);
  EXPECT_TRUE(std::filesystem::exists(dir / "cameras.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "tracks.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "sparse.ply"));
  const Reconstruction back = LoadReconstruction(dir);
  EXPECT_EQ(back.keypoints, recon.keypoints);
  EXPECT_EQ(back.keypoint_track, recon.keypoint_track);
  EXPECT_EQ(back.frame_indices, recon.frame_indices);
  EXPECT_EQ(back.image_names, recon.image_names);
  EXPECT_EQ(back.init_first, recon.init_first);
  EXPECT_EQ(back.init_second, recon.init_second);
  EXPECT_EQ(back.gauge_axis, recon.gauge_axis);
  ASSERT_EQ(back.tracks.size(), recon.tracks.size());
  for (std::size_t t = 0; t < recon.tracks.size(); ++t) {
    EXPECT_EQ(back.tracks[t].observations, recon.tracks[t].observations);
    EXPECT_EQ(back.tracks[t].point3d.has_value(), recon.tracks[t].point3d.has_value());
    if (recon.tracks[t].point3d) EXPECT_EQ(*back.tracks[t].point3d, *recon.tracks[t].point3d);
    EXPECT_EQ(back.tracks[t].color, recon.tracks[t].color);
  }
  EXPECT_EQ(back.frames.size(), recon.frames.size());
  EXPECT_EQ(ComputeStats(back).points3d, ComputeStats(recon).points3d);
}

TEST(Io, ConfigParsesSubset) {
  const auto entries = ParseConfigText(
      "# comment\n[sfm]\nmax_reproj = 3.5  # trailing\nransac_seed = 7\n\n[texture]\n"
      "occlusion = false\n[input]\nframes = \"a \\\"b\\\"\"\n",
      "cfg.toml");
  ASSERT_EQ(entries.size(), 4u);
  EXPECT_EQ(entries[0].key, "sfm.max_reproj");
  EXPECT_EQ(std::get<double>(entries[0].value), 3.5);
  EXPECT_EQ(entries[0].line, 3);
  EXPECT_EQ(std::get<std::int64_t>(entries[1].value), 7);
  EXPECT_EQ(std::get<bool>(entries[2].value), false);
  EXPECT_EQ(std::get<std::string>(entries[3].value), "a \"b\"");
}

TEST(Io, ConfigErrorsCarryLineNumbers) {
  EXPECT_NE(ConfigError("[sfm]\nmax_reproj = \n").find("cfg.toml:2:"), std::string::npos);
  EXPECT_NE(ConfigError("[sfm\n").find("cfg.toml:1:"), std::string::npos);
  EXPECT_NE(ConfigError("[a]\nx = 1\nx = 2\n").find("cfg.toml:3:"), std::string::npos);
  EXPECT_NE(ConfigError("\n\nname = \"open\n").find("cfg.toml:3:"), std::string::npos);
}

TEST(Io, ConfigRejectsUnknownKeysAndTypes) {
  const auto dir = testing::TempDir("io_config");
  WriteText(dir / "unknown.toml", "[sfm]\nmax_reprojection = 2.0\n");
  WriteText(dir / "type.toml", "[sfm]\nransac_seed = \"x\"\n");
  WriteText(dir / "range.toml", "[mesh]\npoisson_depth = 12\n");
  for (const char* name : {"unknown.toml", "type.toml", "range.toml"}) {
    EXPECT_EQ(ThrownKind([&] { LoadConfig(dir / name, {}); }), ErrorKind::kConfig) << name;
  }
  try {
    LoadConfig(dir / "unknown.toml", {});
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unknown.toml:2:"), std::string::npos) << e.what();
  }
  EXPECT_EQ(ThrownKind([&] { LoadConfig({}, {"sfm.max_reproj"}); }), ErrorKind::kConfig);
  EXPECT_EQ(ThrownKind([&] { LoadConfig({}, {"nope.key=1"}); }), ErrorKind::kConfig);
}

TEST(Io, ConfigPrecedence) {
  const auto dir = testing::TempDir("io_config_prec");
  WriteText(dir / "c.toml", "[sfm]\nmax_reproj = 3.0\nransac_seed = 5\n[mesh]\nscreening = 2\n");
  const PipelineConfig defaults = LoadConfig({}, {});
  EXPECT_EQ(defaults.max_reproj, 4.0);
  EXPECT_EQ(defaults.ransac_seed, 42);
  const PipelineConfig file = LoadConfig(dir / "c.toml", {});
  EXPECT_EQ(file.max_reproj, 3.0);
  EXPECT_EQ(file.ransac_seed, 5);
  EXPECT_EQ(file.screening, 2.0);
  const PipelineConfig over = LoadConfig(dir / "c.toml", {"sfm.ransac_seed=9"});
  EXPECT_EQ(over.ransac_seed, 9);
  EXPECT_EQ(over.max_reproj, 3.0);
  EXPECT_FALSE(defaults.ToJson().contains("out"));
  for (const auto& key : ConfigKeys()) EXPECT_NE(key.find('.'), std::string::npos);
}

}  // namespace
}  // namespace gastro
