#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace gastro {

struct PipelineConfig {
  // [input]
  std::string frames;      // directory of frame_%06d.png
  std::string intrinsics;  // intrinsics JSON
  std::int64_t range_begin = 0;
  std::int64_t range_end = -1;  // -1 keeps everything
  // [preprocess]
  std::string channel = "red";
  double dedup_tau = 2.0;
  // [features]
  std::int64_t max_features = 2000;
  double ratio_threshold = 0.8;
  // [sfm]
  double max_reproj = 4.0;
  std::int64_t ransac_seed = 42;
  double min_triangulation_angle = 1.5;
  // [mesh]
  std::int64_t filter_n = 10000;
  double neighbor_fraction = 0.1;
  double normal_fraction = 0.1;
  double sigma_multiplier = 2.0;
  std::int64_t poisson_depth = 6;
  double screening = 4.0;
  // [texture]
  double angle_exponent = 1.0;
  double distance_exponent = 2.0;
  bool occlusion = true;
  std::int64_t texel_budget = 8192;
  double texels_per_pixel = 1.0;
  std::int64_t max_chart_side = 64;
  // [export]
  std::int64_t frame_max_side = 512;
  std::int64_t jpeg_quality = 90;
  // [output]
  std::string out;

  // Throws kConfig naming the first field outside its documented range.
  void Validate() const;
  nlohmann::json ToJson() const;
};

using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;

struct ConfigEntry {
  std::string key;  // "section.name"
  ConfigValue value;
  int line = 0;
};

// Parses the TOML subset used for configs: [section] headers, key = value
// lines with strings, integers, floats and booleans, and # comments.
// Errors are kConfig and carry "<origin>:<line>:".
std::vector<ConfigEntry> ParseConfigText(const std::string& text, const std::string& origin);

// Assigns one entry; rejects unknown keys and mismatched types.
void ApplyConfigEntry(PipelineConfig& config, const ConfigEntry& entry, const std::string& origin);

// Defaults, then the file (when given), then "key=value" overrides, then Validate.
PipelineConfig LoadConfig(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides);

// Every accepted key in "section.name" form.
std::vector<std::string> ConfigKeys();

}  // namespace gastro
