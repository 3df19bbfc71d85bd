#include "gastro/reconstruction.hpp"

#include <cmath>

namespace gastro {

std::size_t Reconstruction::NumPoints() const {
  std::size_t n = 0;
  for (const auto& t : tracks) n += t.point3d.has_value();
  return n;
}

std::optional<double> Reconstruction::ReprojectionError(const Track& track,
                                                        const Observation& obs) const {
  if (!track.point3d) return std::nullopt;
  const auto it = frames.find(obs.image);
  if (it == frames.end()) return std::nullopt;
  const Vec3 pc = it->second.Apply(*track.point3d);
  if (!(pc.z() > 0.0)) return std::nullopt;
  const auto px = TryProject(intrinsics, pc);
  if (!px) return std::nullopt;
  return (*px - Pixel(obs)).norm();
}

void Reconstruction::RemoveObservation(std::size_t track_id, std::size_t k) {
  auto& obs = tracks[track_id].observations;
  const Observation o = obs[k];
  keypoint_track[o.image][o.keypoint] = -1;
  obs.erase(obs.begin() + static_cast<std::ptrdiff_t>(k));
}

std::vector<Observation> Reconstruction::RegisteredObservations(const Track& track) const {
  std::vector<Observation> out;
  for (const auto& o : track.observations) {
    if (IsRegistered(o.image)) out.push_back(o);
  }
  return out;
}

double RoundedPercent(std::size_t part, std::size_t whole) {
  if (whole == 0) return 0.0;
  return std::round(1000.0 * static_cast<double>(part) / static_cast<double>(whole)) / 10.0;
}

ReconstructionStats ComputeStats(const Reconstruction& recon) {
  ReconstructionStats stats;
  stats.input_images = recon.NumImages();
  stats.reconstructed_images = recon.frames.size();
  stats.reconstructed_pct = RoundedPercent(stats.reconstructed_images, stats.input_images);
  std::size_t observations = 0;
  for (const auto& t : recon.tracks) {
    if (!t.point3d) continue;
    ++stats.points3d;
    for (const auto& o : t.observations) observations += recon.IsRegistered(o.image);
  }
  if (stats.reconstructed_images > 0) {
    stats.average_observation =
        static_cast<double>(observations) / static_cast<double>(stats.reconstructed_images);
  }
  return stats;
}

}  // namespace gastro
