#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gastro/camera.hpp"
#include "gastro/reconstruction.hpp"

namespace gastro {

void WriteIntrinsicsJson(const std::filesystem::path& path, const CameraIntrinsics& intr);
CameraIntrinsics ReadIntrinsicsJson(const std::filesystem::path& path);

// One camera of a cameras manifest. Pose is world-to-camera; quaternion is
// stored as [w, x, y, z].
struct CameraEntry {
  int id = 0;           // image id inside the reconstruction
  int frame_index = 0;  // on-disk frame number
  Quat quaternion = Quat::Identity();
  Vec3 translation = Vec3::Zero();
  std::string image;    // path relative to the manifest

  RigidPose Pose() const { return RigidPose::FromQuaternion(quaternion, translation); }
};

struct CamerasManifest {
  std::size_t input_images = 0;
  CameraIntrinsics intrinsics;
  std::vector<CameraEntry> frames;  // ascending id
};

// Registered frames of a reconstruction. `image_name` maps an image id to the
// file name written into each entry.
CamerasManifest MakeCamerasManifest(const Reconstruction& recon,
                                    const std::vector<std::string>& image_names);
void WriteCamerasJson(const std::filesystem::path& path, const CamerasManifest& manifest);
CamerasManifest ReadCamerasJson(const std::filesystem::path& path);

// Stats recomputed from a manifest alone (registered count and percentage).
ReconstructionStats StatsFromManifest(const CamerasManifest& manifest);

// Ground-truth trajectory file written by the synthetic renderer.
void WritePosesJson(const std::filesystem::path& path, const std::vector<RigidPose>& poses);
std::vector<RigidPose> ReadPosesJson(const std::filesystem::path& path);

// Keypoints and tracks of a reconstruction in a little-endian binary file.
void WriteTracksBinary(const std::filesystem::path& path, const Reconstruction& recon);

// Full reconstruction directory: cameras.json, tracks.bin and sparse.ply.
void SaveReconstruction(const std::filesystem::path& dir, const Reconstruction& recon);
Reconstruction LoadReconstruction(const std::filesystem::path& dir);

}  // namespace gastro
