#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gastro/reconstruction.hpp"
#include "gastro/texturing.hpp"

namespace gastro {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitStage = 3;

struct ExportOptions {
  int frame_max_side = 512;
  int jpeg_quality = 90;
};

// Viewer bundle: mesh.obj, mesh.mtl, atlas.png, cameras.json and frames/ with
// downscaled JPEGs of every registered frame. Frames are read from
// frames_dir/frame_%06d.png by frame index. Throws kExport for an empty
// reconstruction or missing frames (listing their ids).
void ExportViewerBundle(const Reconstruction& recon, const TexturedMesh& textured,
                        const std::filesystem::path& frames_dir,
                        const std::filesystem::path& out_dir, const ExportOptions& options = {});

// Textured OBJ plus the atlas named by its material file.
TexturedMesh ReadTexturedObj(const std::filesystem::path& obj_path);

// Runs one subcommand; args exclude the program name. Returns the exit status.
int RunSubcommand(const std::vector<std::string>& args);

}  // namespace gastro
