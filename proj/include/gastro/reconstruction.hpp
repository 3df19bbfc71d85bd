#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gastro/camera.hpp"
#include "gastro/types.hpp"

namespace gastro {

struct Observation {
  int image = 0;
  int keypoint = 0;

  bool operator==(const Observation&) const = default;
};

using Rgb = std::array<std::uint8_t, 3>;

struct Track {
  std::vector<Observation> observations;
  std::optional<Vec3> point3d;
  std::optional<Rgb> color;
};

// Incremental SfM state. Image ids are positions in the input sequence;
// frame_indices maps them back to the on-disk frame numbers.
struct Reconstruction {
  CameraIntrinsics intrinsics;
  std::vector<int> frame_indices;
  std::vector<std::string> image_names;
  std::vector<std::vector<Vec2>> keypoints;
  std::vector<std::vector<int>> keypoint_track;  // -1 when unassigned
  std::map<int, RigidPose> frames;
  std::vector<Track> tracks;

  // Gauge: init_first stays at identity, init_second keeps translation
  // component gauge_axis fixed.
  int init_first = -1;
  int init_second = -1;
  int gauge_axis = 0;

  std::size_t NumImages() const { return keypoints.size(); }
  bool IsRegistered(int image) const { return frames.count(image) > 0; }
  std::size_t NumPoints() const;

  const Vec2& Pixel(const Observation& obs) const { return keypoints[obs.image][obs.keypoint]; }

  // Reprojection error in pixels, or nullopt when the point is not projectable.
  std::optional<double> ReprojectionError(const Track& track, const Observation& obs) const;

  // Removes observation k of a track and clears its keypoint back-reference.
  void RemoveObservation(std::size_t track_id, std::size_t k);

  // Registered observations of a track.
  std::vector<Observation> RegisteredObservations(const Track& track) const;
};

struct ReconstructionStats {
  std::size_t input_images = 0;
  std::size_t reconstructed_images = 0;
  double reconstructed_pct = 0.0;
  std::size_t points3d = 0;
  double average_observation = 0.0;
};

// Percentage rounded to one decimal.
double RoundedPercent(std::size_t part, std::size_t whole);

ReconstructionStats ComputeStats(const Reconstruction& recon);

}  // namespace gastro
