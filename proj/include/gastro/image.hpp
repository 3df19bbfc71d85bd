#pragma once

#include <cstdint>
#include <vector>

namespace gastro {

// Interleaved 8-bit raster with 1 or 3 channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

// Single-channel float raster used by the feature pipeline.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Bilinear sample of channel c at continuous pixel coordinates (pixel centers
// at integers). Returns false when (x, y) falls outside [0, w-1] x [0, h-1].
bool SampleBilinear(const Image& image, double x, double y, int c, double* value);
float SampleBilinear(const ImageF& image, float x, float y);

// Gray conversion: channel 0 for single-channel input, else Rec.601 luma.
ImageF ToFloat(const Image& image, float scale = 1.0f / 255.0f);

// Box-filter downsample by an integer factor (partial border blocks dropped).
Image DownsampleBox(const Image& image, int factor);

// Area-resample so that the longer side is at most max_side.
Image ResizeToMaxSide(const Image& image, int max_side);

// Population standard deviation of the 4-neighbour Laplacian of channel c.
double LaplacianStd(const Image& image, int c = 0);

}  // namespace gastro
