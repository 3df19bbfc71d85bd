#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "gastro/image.hpp"

namespace gastro {

enum class ChannelTag { kRed, kGreen, kBlue, kRgb };

std::string ToString(ChannelTag tag);
ChannelTag ParseChannelTag(const std::string& name);

struct FrameRecord {
  int index = 0;
  Image image;
  ChannelTag channel = ChannelTag::kRgb;
  std::string source_id;
};

// Planar red, green and blue frames from an interleaved RGB frame.
std::array<FrameRecord, 3> SplitChannels(const FrameRecord& frame);

// Inverse of SplitChannels.
FrameRecord InterleaveChannels(const FrameRecord& red, const FrameRecord& green,
                               const FrameRecord& blue);

FrameRecord ExtractChannel(const FrameRecord& frame, ChannelTag channel);

// Mean absolute difference between two frames after 4x box downsampling of the
// gray plane (luma for RGB input).
double MeanAbsoluteDifference(const Image& a, const Image& b);

// Keeps frame 0 and every frame whose difference to the last kept frame is >= tau.
std::vector<FrameRecord> DedupFrames(const std::vector<FrameRecord>& frames, double tau);

// Half-open slice [begin, end).
std::vector<FrameRecord> SelectRange(const std::vector<FrameRecord>& frames, std::size_t begin,
                                     std::size_t end);

// frame_%06d.png naming used on disk.
std::string FrameFileName(int index);

// Loads every frame_%06d.png in a directory, ordered by index.
std::vector<FrameRecord> LoadFrameSequence(const std::filesystem::path& dir);

struct PreprocessOptions {
  ChannelTag channel = ChannelTag::kRed;
  double dedup_tau = 2.0;
  std::size_t range_begin = 0;
  std::size_t range_end = static_cast<std::size_t>(-1);  // clamp to length
};

struct PreprocessManifest {
  std::string channel;
  double tau = 0.0;
  std::vector<int> kept_indices;
  std::vector<std::string> files;
};

// Range cut, channel extraction and dedup; writes single-channel PNGs and
// manifest.json into out_dir.
PreprocessManifest RunPreprocess(const std::filesystem::path& in_dir,
                                 const std::filesystem::path& out_dir,
                                 const PreprocessOptions& options);

PreprocessManifest ReadPreprocessManifest(const std::filesystem::path& path);

}  // namespace gastro
