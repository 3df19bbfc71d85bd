#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gastro/image.hpp"

namespace gastro {

struct Keypoint {
  float x = 0.0f;
  float y = 0.0f;
  float scale = 0.0f;        // Gaussian sigma in input pixels
  float orientation = 0.0f;  // radians in [0, 2 pi)
  float response = 0.0f;     // |DoG| at the refined extremum
};

inline constexpr int kDescriptorSize = 128;

using DescriptorMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, kDescriptorSize, Eigen::RowMajor>;

// Keypoints and index-aligned descriptor rows of one image.
struct FeatureSet {
  int width = 0;
  int height = 0;
  std::vector<Keypoint> keypoints;
  DescriptorMatrix descriptors;

  std::size_t size() const { return keypoints.size(); }
};

struct SiftOptions {
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  double input_blur = 0.5;
  double contrast_threshold = 0.04;
  double edge_threshold = 10.0;
  int min_octave_size = 16;
  // Strongest responses kept; 0 keeps everything.
  int max_features = 2000;
};

// Difference-of-Gaussians detector with 4x4x8 gradient-histogram descriptors.
// Requires an image of at least 64x64; RGB input is reduced to luma.
FeatureSet DetectAndDescribe(const Image& image, const SiftOptions& options = {});

struct Match {
  int index1 = 0;
  int index2 = 0;
  float distance = 0.0f;
};

struct MatchSet {
  int image1 = 0;
  int image2 = 0;
  std::vector<Match> matches;
};

struct MatchOptions {
  double ratio = 0.8;
  bool cross_check = true;
};

// Ratio test as used by the matcher: nearest < ratio * second nearest.
inline bool PassesRatioTest(double nearest, double second, double ratio) {
  return nearest < ratio * second;
}

// Matches between two descriptor sets: mutual nearest neighbours passing the
// ratio test in both directions. Sorted by index1.
std::vector<Match> MatchPair(const DescriptorMatrix& a, const DescriptorMatrix& b,
                             const MatchOptions& options = {});

// Every unordered pair (i < j) in lexicographic order, possibly with empty lists.
std::vector<MatchSet> MatchExhaustive(const std::vector<FeatureSet>& features,
                                      const MatchOptions& options = {});

// Pair index of (i, j), i < j, in the order MatchExhaustive emits.
std::size_t PairIndex(int i, int j, int num_images);

// ---------------------------------------------------------------------------
// On-disk cache: one little-endian file per image keyed by a content hash.

std::uint64_t ContentHash(const Image& image, const SiftOptions& options);

void WriteFeatureFile(const std::filesystem::path& path, const FeatureSet& features,
                      std::uint64_t key);
// Returns nullopt when the file is missing, has a different version or key.
std::optional<FeatureSet> ReadFeatureFile(const std::filesystem::path& path,
                                          std::uint64_t key);

class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir);

  // Detects features, consulting and filling the cache.
  FeatureSet Get(const Image& image, const SiftOptions& options) const;
  std::filesystem::path PathFor(std::uint64_t key) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace gastro
