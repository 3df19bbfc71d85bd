#pragma once

#include <filesystem>

#include "gastro/image.hpp"

namespace gastro {

// 8-bit PNG; gray and gray+alpha load as 1 channel, RGB/RGBA/palette as 3.
Image ReadPng(const std::filesystem::path& path);
void WritePng(const std::filesystem::path& path, const Image& image);

// Baseline JPEG at the given quality (1..100).
void WriteJpeg(const std::filesystem::path& path, const Image& image, int quality = 90);

}  // namespace gastro
