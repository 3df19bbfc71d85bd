#include "gastro/image.hpp"

#include <algorithm>
#include <cmath>

#include "gastro/error.hpp"

namespace gastro {

bool SampleBilinear(const Image& image, double x, double y, int c, double* value) {
  if (!(x >= 0.0 && y >= 0.0 && x <= image.width - 1 && y <= image.height - 1)) {
    return false;
  }
  const int x0 = std::min(static_cast<int>(x), image.width - 1);
  const int y0 = std::min(static_cast<int>(y), image.height - 1);
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * image.at(x0, y0, c) + fx * image.at(x1, y0, c);
  const double bottom = (1.0 - fx) * image.at(x0, y1, c) + fx * image.at(x1, y1, c);
  *value = (1.0 - fy) * top + fy * bottom;
  return true;
}

float SampleBilinear(const ImageF& image, float x, float y) {
  x = std::clamp(x, 0.0f, static_cast<float>(image.width - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(image.height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const float fx = x - x0;
  const float fy = y - y0;
  return (1 - fy) * ((1 - fx) * image.at(x0, y0) + fx * image.at(x1, y0)) +
         fy * ((1 - fx) * image.at(x0, y1) + fx * image.at(x1, y1));
}

ImageF ToFloat(const Image& image, float scale) {
  ImageF out(image.width, image.height);
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  if (image.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) out.data[i] = image.data[i] * scale;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto* px = &image.data[i * image.channels];
      out.data[i] = (0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2]) * scale;
    }
  }
  return out;
}

Image DownsampleBox(const Image& image, int factor) {
  GASTRO_CHECK(factor >= 1, ErrorKind::kInvalidInput, "downsample factor must be >= 1");
  if (factor == 1) return image;
  const int w = image.width / factor;
  const int h = image.height / factor;
  Image out(w, h, image.channels);
  const int area = factor * factor;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        int sum = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            sum += image.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = static_cast<std::uint8_t>((sum + area / 2) / area);
      }
    }
  }
  return out;
}

Image ResizeToMaxSide(const Image& image, int max_side) {
  const int longest = std::max(image.width, image.height);
  if (longest <= max_side) return image;
  const double scale = static_cast<double>(max_side) / longest;
  const int w = std::max(1, static_cast<int>(std::lround(image.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(image.height * scale)));
  Image out(w, h, image.channels);
  const double sx = static_cast<double>(image.width) / w;
  const double sy = static_cast<double>(image.height) / h;
  for (int y = 0; y < h; ++y) {
    const int y0 = static_cast<int>(y * sy);
    const int y1 = std::max(y0 + 1, static_cast<int>((y + 1) * sy));
    for (int x = 0; x < w; ++x) {
      const int x0 = static_cast<int>(x * sx);
      const int x1 = std::max(x0 + 1, static_cast<int>((x + 1) * sx));
      for (int c = 0; c < image.channels; ++c) {
        long sum = 0;
        for (int yy = y0; yy < std::min(y1, image.height); ++yy)
          for (int xx = x0; xx < std::min(x1, image.width); ++xx) sum += image.at(xx, yy, c);
        const long count = static_cast<long>(std::min(y1, image.height) - y0) *
                           (std::min(x1, image.width) - x0);
        out.at(x, y, c) = static_cast<std::uint8_t>((sum + count / 2) / count);
      }
    }
  }
  return out;
}

double LaplacianStd(const Image& image, int c) {
  if (image.width < 3 || image.height < 3) return 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (int y = 1; y + 1 < image.height; ++y) {
    for (int x = 1; x + 1 < image.width; ++x) {
      const double lap = image.at(x - 1, y, c) + image.at(x + 1, y, c) +
                         image.at(x, y - 1, c) + image.at(x, y + 1, c) -
                         4.0 * image.at(x, y, c);
      sum += lap;
      sum_sq += lap * lap;
      ++n;
    }
  }
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, sum_sq / n - mean * mean));
}

}  // namespace gastro
