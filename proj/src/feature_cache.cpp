#include <array>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gastro/error.hpp"
#include "gastro/features.hpp"

namespace gastro {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void Fnv(std::uint64_t* h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    *h ^= p[i];
    *h *= kFnvPrime;
  }
}

template <typename T>
void PutLE(std::string* buf, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::uint64_t bits = 0;
  if constexpr (std::is_floating_point_v<T>) {
    static_assert(sizeof(T) == 4);
    std::uint32_t u;
    std::memcpy(&u, &value, 4);
    bits = u;
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  buf->append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename T>
bool GetLE(const std::string& buf, std::size_t* pos, T* value) {
  if (*pos + sizeof(T) > buf.size()) return false;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[*pos + i])) << (8 * i);
  *pos += sizeof(T);
  if constexpr (std::is_floating_point_v<T>) {
    const auto u = static_cast<std::uint32_t>(bits);
    std::memcpy(value, &u, 4);
  } else {
    *value = static_cast<T>(bits);
  }
  return true;
}

}  // namespace

std::uint64_t ContentHash(const Image& image, const SiftOptions& options) {
  std::uint64_t h = kFnvOffset;
  const std::int32_t dims[3] = {image.width, image.height, image.channels};
  Fnv(&h, dims, sizeof(dims));
  Fnv(&h, image.data.data(), image.data.size());
  const double params[5] = {options.sigma0, options.input_blur, options.contrast_threshold,
                            options.edge_threshold, 0.0};
  const std::int32_t iparams[3] = {options.scales_per_octave, options.min_octave_size,
                                   options.max_features};
  Fnv(&h, params, sizeof(params));
  Fnv(&h, iparams, sizeof(iparams));
  return h;
}

void WriteFeatureFile(const std::filesystem::path& path, const FeatureSet& features,
                      std::uint64_t key) {
  std::string buf(kMagic, kMagic + 4);
  PutLE<std::uint32_t>(&buf, kVersion);
  PutLE<std::uint64_t>(&buf, key);
  PutLE<std::uint32_t>(&buf, static_cast<std::uint32_t>(features.width));
  PutLE<std::uint32_t>(&buf, static_cast<std::uint32_t>(features.height));
  PutLE<std::uint32_t>(&buf, static_cast<std::uint32_t>(features.size()));
  for (const auto& kp : features.keypoints) {
    PutLE(&buf, kp.x);
    PutLE(&buf, kp.y);
    PutLE(&buf, kp.scale);
    PutLE(&buf, kp.orientation);
    PutLE(&buf, kp.response);
  }
  for (Eigen::Index r = 0; r < features.descriptors.rows(); ++r)
    for (int c = 0; c < kDescriptorSize; ++c) PutLE(&buf, features.descriptors(r, c));
  std::ofstream out(path, std::ios::binary);
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::optional<FeatureSet> ReadFeatureFile(const std::filesystem::path& path, std::uint64_t key) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) return std::nullopt;
  std::size_t pos = 4;
  std::uint32_t version, width, height, count;
  std::uint64_t stored_key;
  if (!GetLE(buf, &pos, &version) || version != kVersion) return std::nullopt;
  if (!GetLE(buf, &pos, &stored_key) || stored_key != key) return std::nullopt;
  if (!GetLE(buf, &pos, &width) || !GetLE(buf, &pos, &height) || !GetLE(buf, &pos, &count)) {
    return std::nullopt;
  }
  FeatureSet fs;
  fs.width = static_cast<int>(width);
  fs.height = static_cast<int>(height);
  fs.keypoints.resize(count);
  for (auto& kp : fs.keypoints) {
    if (!GetLE(buf, &pos, &kp.x) || !GetLE(buf, &pos, &kp.y) || !GetLE(buf, &pos, &kp.scale) ||
        !GetLE(buf, &pos, &kp.orientation) || !GetLE(buf, &pos, &kp.response)) {
      return std::nullopt;
    }
  }
  fs.descriptors.resize(count, kDescriptorSize);
  for (std::uint32_t r = 0; r < count; ++r)
    for (int c = 0; c < kDescriptorSize; ++c)
      if (!GetLE(buf, &pos, &fs.descriptors(r, c))) return std::nullopt;
  if (pos != buf.size()) return std::nullopt;
  return fs;
}

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path FeatureCache::PathFor(std::uint64_t key) const {
  std::ostringstream name;
  name << std::hex << std::setw(16) << std::setfill('0') << key << ".gsft";
  return dir_ / name.str();
}

FeatureSet FeatureCache::Get(const Image& image, const SiftOptions& options) const {
  const std::uint64_t key = ContentHash(image, options);
  const auto path = PathFor(key);
  if (auto cached = ReadFeatureFile(path, key)) return std::move(*cached);
  FeatureSet fs = DetectAndDescribe(image, options);
  WriteFeatureFile(path, fs, key);
  return fs;
}

}  // namespace gastro
