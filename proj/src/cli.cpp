#include "gastro/cli.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gastro/camera.hpp"
#include "gastro/config.hpp"
#include "gastro/error.hpp"
#include "gastro/image_io.hpp"
#include "gastro/manifest.hpp"
#include "gastro/mesh.hpp"
#include "gastro/meshgen.hpp"
#include "gastro/obj.hpp"
#include "gastro/ply.hpp"
#include "gastro/preprocess.hpp"
#include "gastro/sfm.hpp"
#include "gastro/synthbench.hpp"
#include "gastro/texturing.hpp"

namespace gastro {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fixed stream offsets for the stages that draw random numbers.
constexpr std::uint64_t kMeshStream = 1;

std::string JpegName(int frame_index) {
  const std::string png = FrameFileName(frame_index);
  return png.substr(0, png.size() - 4) + ".jpg";
}

std::string ReadMtlTexture(const fs::path& mtl_path) {
  std::ifstream in(mtl_path);
  GASTRO_CHECK(in.good(), ErrorKind::kIo, "cannot read " + mtl_path.string());
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "map_Kd") {
      std::string name;
      ss >> name;
      return name;
    }
  }
  throw Error(ErrorKind::kIo, mtl_path.string() + " has no map_Kd entry");
}

void WriteJsonFile(const fs::path& path, const json& j) {
  std::ofstream out(path);
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json StatsJson(const ReconstructionStats& s) {
  return {{"input_images", s.input_images},
          {"reconstructed_images", s.reconstructed_images},
          {"reconstructed_pct", s.reconstructed_pct},
          {"points3d", s.points3d},
          {"average_observation", s.average_observation}};
}

}  // namespace

void ExportViewerBundle(const Reconstruction& recon, const TexturedMesh& textured,
                        const fs::path& frames_dir, const fs::path& out_dir,
                        const ExportOptions& options) {
  GASTRO_CHECK(!recon.frames.empty(), ErrorKind::kExport,
               "reconstruction has no registered frames");
  GASTRO_CHECK(!textured.mesh.triangles.empty(), ErrorKind::kExport, "textured mesh is empty");
  auto frame_of = [&](int id) {
    return static_cast<std::size_t>(id) < recon.frame_indices.size() ? recon.frame_indices[id] : id;
  };
  std::vector<int> missing;
  for (const auto& [id, pose] : recon.frames) {
    if (!fs::exists(frames_dir / FrameFileName(frame_of(id)))) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (const int id : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    throw Error(ErrorKind::kExport, "missing frame images for ids " + ids);
  }
  fs::create_directories(out_dir / "frames");
  WriteTexturedObj(out_dir, "mesh", textured, "atlas.png");
  std::vector<std::string> names(recon.NumImages());
  for (const auto& [id, pose] : recon.frames) {
    const int frame = frame_of(id);
    names[id] = "frames/" + JpegName(frame);
    const Image image = ReadPng(frames_dir / FrameFileName(frame));
    WriteJpeg(out_dir / names[id], ResizeToMaxSide(image, options.frame_max_side),
              options.jpeg_quality);
  }
  WriteCamerasJson(out_dir / "cameras.json", MakeCamerasManifest(recon, names));
}

TexturedMesh ReadTexturedObj(const fs::path& obj_path) {
  const ObjData obj = ReadObj(obj_path);
  GASTRO_CHECK(obj.face_texcoords.size() == obj.faces.size(), ErrorKind::kIo,
               obj_path.string() + " lacks texture coordinates");
  GASTRO_CHECK(!obj.mtllib.empty(), ErrorKind::kIo, obj_path.string() + " has no mtllib");
  TexturedMesh out;
  out.mesh = ToMesh(obj);
  for (const auto& ft : obj.face_texcoords) {
    std::array<Vec2, 3> uv;
    for (int k = 0; k < 3; ++k) {
      GASTRO_CHECK(ft[k] >= 0 && static_cast<std::size_t>(ft[k]) < obj.texcoords.size(),
                   ErrorKind::kIo, "texture coordinate index out of range");
      uv[k] = obj.texcoords[ft[k]];
    }
    out.uvs.push_back(uv);
  }
  const fs::path dir = obj_path.parent_path();
  out.atlas = ReadPng(dir / ReadMtlTexture(dir / obj.mtllib));
  return out;
}

namespace {

struct StageFailure {
  std::string stage;
  std::string message;
};

class Runner {
 public:
  explicit Runner(PipelineConfig config) : config_(std::move(config)) {}

  template <typename Fn>
  auto Stage(const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        Finish(name, t0);
      } else {
        auto result = fn();
        Finish(name, t0);
        return result;
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kConfig) throw;
      throw StageFailure{name, e.what()};
    } catch (const std::exception& e) {
      throw StageFailure{name, e.what()};
    }
  }

  const PipelineConfig& config() const { return config_; }
  json& stages() { return stages_; }

  void WriteReport(const fs::path& path, const std::string& command, const std::string& config_file,
                   const std::string& input) const {
    json report;
    report["command"] = command;
    report["config_file"] = config_file;
    report["config"] = config_.ToJson();
    report["seed"] = config_.ransac_seed;
    report["input"] = input;
    report["stages"] = stages_;
    report["timings"] = timings_;
    WriteJsonFile(path, report);
  }

  SfmOptions Sfm() const {
    SfmOptions o;
    o.max_reproj = config_.max_reproj;
    o.seed = static_cast<std::uint64_t>(config_.ransac_seed);
    o.min_triangulation_angle_deg = config_.min_triangulation_angle;
    o.sift.max_features = static_cast<int>(config_.max_features);
    o.match.ratio = config_.ratio_threshold;
    return o;
  }

  MeshOptions Mesh() const {
    MeshOptions o;
    o.filter.n = static_cast<std::size_t>(config_.filter_n);
    o.filter.neighbor_fraction = config_.neighbor_fraction;
    o.filter.sigma_multiplier = config_.sigma_multiplier;
    o.normal_fraction = config_.normal_fraction;
    o.poisson.depth = static_cast<int>(config_.poisson_depth);
    o.poisson.screening = config_.screening;
    o.seed = DeriveSeed(static_cast<std::uint64_t>(config_.ransac_seed), kMeshStream);
    return o;
  }

  TextureOptions Texture() const {
    TextureOptions o;
    o.angle_exponent = config_.angle_exponent;
    o.distance_exponent = config_.distance_exponent;
    o.occlusion = config_.occlusion;
    o.texel_budget = static_cast<int>(config_.texel_budget);
    o.texels_per_pixel = config_.texels_per_pixel;
    o.max_chart_side = static_cast<int>(config_.max_chart_side);
    return o;
  }

  ExportOptions Export() const {
    return {static_cast<int>(config_.frame_max_side), static_cast<int>(config_.jpeg_quality)};
  }

 private:
  void Finish(const std::string& name, std::chrono::steady_clock::time_point t0) {
    timings_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "[" << name << "] done in " << timings_[name].get<double>() << " s\n";
  }

  PipelineConfig config_;
  json stages_ = json::object();
  json timings_ = json::object();
};

fs::path RequirePath(const std::string& value, const std::string& what) {
  if (value.empty()) throw Error(ErrorKind::kConfig, what + " is required");
  return value;
}

json PreprocessStage(Runner& run, const fs::path& in_dir, const fs::path& out_dir) {
  const auto& c = run.config();
  PreprocessOptions o;
  o.channel = ParseChannelTag(c.channel);
  o.dedup_tau = c.dedup_tau;
  o.range_begin = static_cast<std::size_t>(c.range_begin);
  if (c.range_end >= 0) o.range_end = static_cast<std::size_t>(c.range_end);
  const PreprocessManifest m = RunPreprocess(in_dir, out_dir, o);
  return {{"kept_frames", m.kept_indices.size()}, {"channel", m.channel}};
}

struct LoadedImages {
  std::vector<Image> images;
  std::vector<int> frame_indices;
  std::vector<std::string> names;
};

LoadedImages LoadSfmInput(const fs::path& dir, const PipelineConfig& config) {
  LoadedImages out;
  if (fs::exists(dir / "manifest.json")) {
    const PreprocessManifest m = ReadPreprocessManifest(dir / "manifest.json");
    GASTRO_CHECK(m.files.size() == m.kept_indices.size(), ErrorKind::kIo,
                 "preprocess manifest lists mismatched files and indices");
    for (std::size_t i = 0; i < m.files.size(); ++i) {
      out.images.push_back(ReadPng(dir / m.files[i]));
      out.frame_indices.push_back(m.kept_indices[i]);
      out.names.push_back(m.files[i]);
    }
  } else {
    for (auto& f : LoadFrameSequence(dir)) {
      const Image image = f.image.channels == 1
                              ? f.image
                              : ExtractChannel(f, ParseChannelTag(config.channel)).image;
      out.images.push_back(image);
      out.frame_indices.push_back(f.index);
      out.names.push_back(FrameFileName(f.index));
    }
  }
  GASTRO_CHECK(out.images.size() >= 2, ErrorKind::kInsufficientData,
               "reconstruction needs at least 2 images in " + dir.string());
  return out;
}

Reconstruction ReconstructStage(Runner& run, const fs::path& images_dir, const fs::path& intr_path,
                                const fs::path& out_dir) {
  const CameraIntrinsics intr = ReadIntrinsicsJson(intr_path);
  const LoadedImages input = LoadSfmInput(images_dir, run.config());
  ReconstructResult result = Reconstruct(input.images, intr, run.Sfm());
  result.reconstruction.frame_indices = input.frame_indices;
  result.reconstruction.image_names = input.names;
  SaveReconstruction(out_dir, result.reconstruction);
  run.stages()["reconstruct"] = StatsJson(result.stats);
  return std::move(result.reconstruction);
}

TriangleMesh MeshStage(Runner& run, const Reconstruction& recon, const fs::path& out_dir,
                       bool write_filter_report) {
  fs::create_directories(out_dir);
  const PointCloud cloud = CloudFromReconstruction(recon);
  const MeshResult r = BuildMesh(cloud, recon.frames, run.Mesh());
  WriteMeshPly(out_dir / "mesh.ply", r.mesh);
  ObjData obj;
  obj.vertices = r.mesh.vertices;
  obj.faces = r.mesh.triangles;
  WriteObj(out_dir / "mesh.obj", obj);
  if (write_filter_report) {
    WriteJsonFile(out_dir / "filter_report.json",
                  {{"mean_dist_per_point", r.report.mean_dist_per_point},
                   {"global_mean", r.report.global_mean},
                   {"global_std", r.report.global_std},
                   {"threshold", r.report.threshold},
                   {"inlier_count", r.report.inlier_count}});
  }
  run.stages()["mesh"] = {{"cloud_points", cloud.size()},
                          {"filtered_points", r.report.inlier_count},
                          {"vertices", r.mesh.vertices.size()},
                          {"triangles", r.mesh.triangles.size()},
                          {"closed_manifold", IsClosedManifold(r.mesh)},
                          {"euler_characteristic", EulerCharacteristic(r.mesh)}};
  return r.mesh;
}

TexturedMesh TextureStage(Runner& run, const Reconstruction& recon, const TriangleMesh& mesh,
                          const fs::path& frames_dir, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<Image> images(recon.NumImages());
  for (const auto& [id, pose] : recon.frames) {
    const int frame =
        static_cast<std::size_t>(id) < recon.frame_indices.size() ? recon.frame_indices[id] : id;
    images[id] = ReadPng(frames_dir / FrameFileName(frame));
  }
  const TextureOptions options = run.Texture();
  const ViewAssignment assignment = SelectViews(mesh, recon.intrinsics, recon.frames, options);
  TexturedMesh textured = BakeAtlas(mesh, assignment, recon.intrinsics, recon.frames, images, options);
  WriteTexturedObj(out_dir, "textured", textured, "atlas.png");
  WriteChartTable(out_dir / "charts.json", textured);
  run.stages()["texture"] = {{"triangles", mesh.triangles.size()},
                             {"assigned_triangles", assignment.NumAssigned()},
                             {"atlas_width", textured.atlas.width},
                             {"atlas_height", textured.atlas.height}};
  return textured;
}

std::vector<CalibrationView> ReadCalibrationViews(const fs::path& path, int* width, int* height) {
  std::ifstream in(path);
  GASTRO_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::vector<CalibrationView> views;
  try {
    const json j = json::parse(in);
    *width = j.at("width").get<int>();
    *height = j.at("height").get<int>();
    for (const auto& v : j.at("views")) {
      CalibrationView view;
      for (const auto& c : v) {
        GASTRO_CHECK(c.size() == 5, ErrorKind::kIo, "correspondence needs [X, Y, Z, u, v]");
        view.correspondences.emplace_back(
            Vec3(c[0].get<double>(), c[1].get<double>(), c[2].get<double>()),
            Vec2(c[3].get<double>(), c[4].get<double>()));
      }
      views.push_back(std::move(view));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
  return views;
}

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  std::int64_t seed = -1;
};

void AddCommon(CLI::App* app, CommonArgs& args) {
  app->add_option("--config", args.config_file, "TOML config file");
  app->add_option("--set", args.sets, "Override a config key (section.key=value)");
  app->add_option("--out", args.out, "Output directory");
  app->add_option("--seed", args.seed, "RANSAC seed (overrides sfm.ransac_seed)");
}

std::string Quoted(const std::string& key, const std::string& value) {
  std::string escaped;
  for (const char c : value) {
    if (c == '"' || c == '\\') escaped += '\\';
    escaped += c;
  }
  return key + " = \"" + escaped + "\"";
}

PipelineConfig ResolveConfig(const CommonArgs& args, std::vector<std::string> extra) {
  std::vector<std::string> overrides = args.sets;
  for (auto& e : extra) overrides.push_back(std::move(e));
  if (!args.out.empty()) overrides.push_back(Quoted("output.out", args.out));
  if (args.seed >= 0) overrides.push_back("sfm.ransac_seed = " + std::to_string(args.seed));
  return LoadConfig(args.config_file, overrides);
}


}  // namespace

int RunSubcommand(const std::vector<std::string>& args) {
  CLI::App app{"Whole-stomach reconstruction pipeline", "gastro"};
  app.require_subcommand(1);
  CommonArgs common;
  std::string frames_dir;
  std::string images_dir;
  std::string intrinsics;
  std::string recon_dir;
  std::string mesh_path;
  std::string textured_dir;
  std::string scene_path;
  std::string views_path;
  std::string texture_variant = "high";
  std::uint64_t scene_seed = 7;
  int num_frames = 40;
  int width = 640;
  int height = 480;
  double amplitude = 0.05;
  bool filter_report = false;

  auto* calibrate = app.add_subcommand("calibrate", "Fisheye calibration from board correspondences");
  calibrate->add_option("--views", views_path, "JSON with width, height and views")->required();
  auto* preprocess = app.add_subcommand("preprocess", "Channel selection and frame dedup");
  preprocess->add_option("--frames", frames_dir, "Directory of frame_%06d.png");
  auto* reconstruct = app.add_subcommand("reconstruct", "Incremental structure from motion");
  reconstruct->add_option("--images", images_dir, "Preprocessed frames directory")->required();
  reconstruct->add_option("--intrinsics", intrinsics, "Intrinsics JSON");
  auto* mesh = app.add_subcommand("mesh", "Watertight mesh from a reconstruction");
  mesh->add_option("--recon", recon_dir, "Reconstruction directory")->required();
  mesh->add_flag("--report", filter_report, "Write filter_report.json");
  auto* texture = app.add_subcommand("texture", "Texture atlas from registered RGB frames");
  texture->add_option("--recon", recon_dir, "Reconstruction directory")->required();
  texture->add_option("--mesh", mesh_path, "Mesh PLY")->required();
  texture->add_option("--frames", frames_dir, "RGB frames directory");
  auto* render = app.add_subcommand("render-synthetic", "Render the synthetic stomach scene");
  render->add_option("--texture", texture_variant, "high or low")->check(CLI::IsMember({"high", "low"}));
  render->add_option("--scene-seed", scene_seed, "Scene seed");
  render->add_option("--num-frames", num_frames, "Trajectory length")->check(CLI::Range(2, 100000));
  render->add_option("--width", width, "Image width")->check(CLI::Range(64, 8192));
  render->add_option("--height", height, "Image height")->check(CLI::Range(64, 8192));
  render->add_option("--amplitude", amplitude, "Radial bump amplitude");
  auto* evaluate = app.add_subcommand("evaluate", "Compare a reconstruction with ground truth");
  evaluate->add_option("--recon", recon_dir, "Reconstruction directory")->required();
  evaluate->add_option("--scene", scene_path, "scene.json")->required();
  evaluate->add_option("--mesh", mesh_path, "Mesh PLY");
  auto* export_viewer = app.add_subcommand("export-viewer", "Write the viewer scene bundle");
  export_viewer->add_option("--recon", recon_dir, "Reconstruction directory")->required();
  export_viewer->add_option("--textured", textured_dir, "Texture stage directory")->required();
  export_viewer->add_option("--frames", frames_dir, "RGB frames directory");
  auto* pipeline = app.add_subcommand("pipeline", "preprocess, reconstruct, mesh, texture, export-viewer");
  pipeline->add_option("--frames", frames_dir, "Directory of frame_%06d.png");
  pipeline->add_option("--intrinsics", intrinsics, "Intrinsics JSON");
  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) AddCommon(sub, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::vector<std::string> extra;
  if (!frames_dir.empty()) extra.push_back(Quoted("input.frames", frames_dir));
  if (!intrinsics.empty()) extra.push_back(Quoted("input.intrinsics", intrinsics));

  try {
    Runner run(ResolveConfig(common, extra));
    const PipelineConfig& c = run.config();
    const fs::path out = RequirePath(c.out, "--out (output.out)");
    fs::create_directories(out);
    std::string input;

    if (calibrate->parsed()) {
      input = views_path;
      run.Stage("calibrate", [&] {
        int w = 0;
        int h = 0;
        const auto views = ReadCalibrationViews(views_path, &w, &h);
        const CalibrationResult r = Calibrate(views, w, h);
        WriteIntrinsicsJson(out / "intrinsics.json", r.intrinsics);
        run.stages()["calibrate"] = {{"rms", r.rms}, {"iterations", r.iterations}};
      });
    } else if (preprocess->parsed()) {
      input = RequirePath(c.frames, "--frames (input.frames)").string();
      run.stages()["preprocess"] = run.Stage("preprocess", [&] { return PreprocessStage(run, input, out); });
    } else if (reconstruct->parsed()) {
      input = images_dir;
      const fs::path intr = RequirePath(c.intrinsics, "--intrinsics (input.intrinsics)");
      run.Stage("reconstruct", [&] { ReconstructStage(run, images_dir, intr, out); });
    } else if (mesh->parsed()) {
      input = recon_dir;
      run.Stage("mesh", [&] { MeshStage(run, LoadReconstruction(recon_dir), out, filter_report); });
    } else if (texture->parsed()) {
      input = recon_dir;
      const fs::path frames = RequirePath(c.frames, "--frames (input.frames)");
      run.Stage("texture", [&] {
        const PlyData ply = ReadPly(mesh_path);
        TriangleMesh m;
        m.vertices = ply.cloud.points;
        m.triangles = ply.faces;
        TextureStage(run, LoadReconstruction(recon_dir), m, frames, out);
      });
    } else if (render->parsed()) {
      run.Stage("render-synthetic", [&] {
        SceneParams p;
        p.texture = ParseTextureVariant(texture_variant);
        p.seed = scene_seed;
        p.num_frames = num_frames;
        p.bump_amplitude = amplitude;
        const SyntheticScene scene(p);
        WriteSyntheticDataset(out, scene, SyntheticIntrinsics(width, height));
        run.stages()["render-synthetic"] = {{"frames", num_frames}, {"texture", texture_variant}};
      });
    } else if (evaluate->parsed()) {
      input = recon_dir;
      run.Stage("evaluate", [&] {
        const Reconstruction recon = LoadReconstruction(recon_dir);
        const SyntheticScene scene(ReadSceneJson(scene_path));
        TriangleMesh m;
        if (!mesh_path.empty()) {
          const PlyData ply = ReadPly(mesh_path);
          m.vertices = ply.cloud.points;
          m.triangles = ply.faces;
        }
        const EvalReport e = Evaluate(recon, mesh_path.empty() ? nullptr : &m, scene);
        const json j = {{"pose_rmse", e.pose_rmse},
                        {"rot_rmse_deg", e.rot_rmse},
                        {"point_to_surface_rms", e.point_to_surface_rms},
                        {"registered_pct", e.registered_pct},
                        {"trajectory_extent", e.trajectory_extent},
                        {"scene_diameter", scene.Diameter()},
                        {"stats", StatsJson(e.stats)}};
        WriteJsonFile(out / "eval.json", j);
        run.stages()["evaluate"] = j;
      });
    } else if (export_viewer->parsed()) {
      input = recon_dir;
      const fs::path frames = RequirePath(c.frames, "--frames (input.frames)");
      run.Stage("export-viewer", [&] {
        ExportViewerBundle(LoadReconstruction(recon_dir),
                           ReadTexturedObj(fs::path(textured_dir) / "textured.obj"), frames, out,
                           run.Export());
      });
    } else if (pipeline->parsed()) {
      input = RequirePath(c.frames, "--frames (input.frames)").string();
      const fs::path intr = RequirePath(c.intrinsics, "--intrinsics (input.intrinsics)");
      run.stages()["preprocess"] =
          run.Stage("preprocess", [&] { return PreprocessStage(run, input, out / "preprocess"); });
      const Reconstruction recon = run.Stage(
          "reconstruct", [&] { return ReconstructStage(run, out / "preprocess", intr, out / "sfm"); });
      const TriangleMesh m = run.Stage("mesh", [&] { return MeshStage(run, recon, out / "mesh", true); });
      const TexturedMesh textured =
          run.Stage("texture", [&] { return TextureStage(run, recon, m, input, out / "texture"); });
      run.Stage("export-viewer",
                [&] { ExportViewerBundle(recon, textured, input, out / "bundle", run.Export()); });
    }
    run.WriteReport(out / "report.json", app.get_subcommands().front()->get_name(),
                    common.config_file, input);
    return kExitOk;
  } catch (const StageFailure& f) {
    std::cerr << "stage " << f.stage << " failed: " << f.message << "\n";
    return kExitStage;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) {
      std::cerr << e.what() << "\n";
      return kExitConfig;
    }
    std::cerr << "stage setup failed: " << e.what() << "\n";
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
}

}  // namespace gastro
