#include "gastro/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include "json.hpp"

#include "gastro/error.hpp"
#include "gastro/image_io.hpp"

namespace gastro {

std::string ToString(ChannelTag tag) {
  switch (tag) {
    case ChannelTag::kRed: return "red";
    case ChannelTag::kGreen: return "green";
    case ChannelTag::kBlue: return "blue";
    case ChannelTag::kRgb: return "rgb";
  }
  return "rgb";
}

ChannelTag ParseChannelTag(const std::string& name) {
  if (name == "red") return ChannelTag::kRed;
  if (name == "green") return ChannelTag::kGreen;
  if (name == "blue") return ChannelTag::kBlue;
  if (name == "rgb") return ChannelTag::kRgb;
  throw Error(ErrorKind::kInvalidInput, "unknown channel '" + name + "'");
}

std::array<FrameRecord, 3> SplitChannels(const FrameRecord& frame) {
  GASTRO_CHECK(frame.image.channels == 3, ErrorKind::kInvalidInput,
               "split_channels needs a 3-channel frame");
  std::array<FrameRecord, 3> out;
  const ChannelTag tags[3] = {ChannelTag::kRed, ChannelTag::kGreen, ChannelTag::kBlue};
  const std::size_t n = static_cast<std::size_t>(frame.image.width) * frame.image.height;
  for (int c = 0; c < 3; ++c) {
    out[c].index = frame.index;
    out[c].source_id = frame.source_id;
    out[c].channel = tags[c];
    out[c].image = Image(frame.image.width, frame.image.height, 1);
    for (std::size_t i = 0; i < n; ++i) out[c].image.data[i] = frame.image.data[3 * i + c];
  }
  return out;
}

FrameRecord InterleaveChannels(const FrameRecord& red, const FrameRecord& green,
                               const FrameRecord& blue) {
  const Image* planes[3] = {&red.image, &green.image, &blue.image};
  for (const Image* p : planes) {
    GASTRO_CHECK(p->channels == 1 && p->width == red.image.width &&
                     p->height == red.image.height,
                 ErrorKind::kInvalidInput, "planes must be single-channel with equal size");
  }
  FrameRecord out;
  out.index = red.index;
  out.source_id = red.source_id;
  out.channel = ChannelTag::kRgb;
  out.image = Image(red.image.width, red.image.height, 3);
  const std::size_t n = static_cast<std::size_t>(red.image.width) * red.image.height;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out.image.data[3 * i + c] = planes[c]->data[i];
  return out;
}

FrameRecord ExtractChannel(const FrameRecord& frame, ChannelTag channel) {
  if (channel == ChannelTag::kRgb) return frame;
  if (frame.image.channels == 1) {
    FrameRecord copy = frame;
    copy.channel = channel;
    return copy;
  }
  return SplitChannels(frame)[static_cast<int>(channel)];
}

namespace {

// 4x box-downsampled gray plane kept in floating point so that threshold
// comparisons are not affected by requantization.
std::vector<double> DownsampledGray(const Image& image, int* w, int* h) {
  constexpr int kFactor = 4;
  *w = std::max(1, image.width / kFactor);
  *h = std::max(1, image.height / kFactor);
  const int fx = std::min(kFactor, image.width);
  const int fy = std::min(kFactor, image.height);
  std::vector<double> out(static_cast<std::size_t>(*w) * *h, 0.0);
  for (int y = 0; y < *h; ++y) {
    for (int x = 0; x < *w; ++x) {
      double sum = 0.0;
      for (int dy = 0; dy < fy; ++dy) {
        for (int dx = 0; dx < fx; ++dx) {
          const int sx = x * kFactor + dx;
          const int sy = y * kFactor + dy;
          if (image.channels == 1) {
            sum += image.at(sx, sy);
          } else {
            sum += 0.299 * image.at(sx, sy, 0) + 0.587 * image.at(sx, sy, 1) +
                   0.114 * image.at(sx, sy, 2);
          }
        }
      }
      out[static_cast<std::size_t>(y) * *w + x] = sum / (fx * fy);
    }
  }
  return out;
}

}  // namespace

double MeanAbsoluteDifference(const Image& a, const Image& b) {
  GASTRO_CHECK(a.width == b.width && a.height == b.height && a.channels == b.channels,
               ErrorKind::kInvalidInput, "frames have mismatched dimensions");
  int w, h;
  const auto da = DownsampledGray(a, &w, &h);
  const auto db = DownsampledGray(b, &w, &h);
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) sum += std::abs(da[i] - db[i]);
  return sum / static_cast<double>(da.size());
}

std::vector<FrameRecord> DedupFrames(const std::vector<FrameRecord>& frames, double tau) {
  GASTRO_CHECK(!frames.empty(), ErrorKind::kInvalidInput, "dedup needs a non-empty sequence");
  GASTRO_CHECK(tau >= 0.0, ErrorKind::kInvalidInput, "tau must be non-negative");
  std::vector<FrameRecord> kept{frames.front()};
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (MeanAbsoluteDifference(frames[i].image, kept.back().image) >= tau) {
      kept.push_back(frames[i]);
    }
  }
  return kept;
}

std::vector<FrameRecord> SelectRange(const std::vector<FrameRecord>& frames, std::size_t begin,
                                     std::size_t end) {
  GASTRO_CHECK(begin <= end && end <= frames.size(), ErrorKind::kInvalidInput,
               "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                   ") outside sequence of length " + std::to_string(frames.size()));
  return {frames.begin() + static_cast<std::ptrdiff_t>(begin),
          frames.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::string FrameFileName(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.png", index);
  return buf;
}

std::vector<FrameRecord> LoadFrameSequence(const std::filesystem::path& dir) {
  GASTRO_CHECK(std::filesystem::is_directory(dir), ErrorKind::kIo,
               "not a directory: " + dir.string());
  static const std::regex kPattern(R"(frame_(\d{6})\.png)");
  std::vector<std::pair<int, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, kPattern)) files.emplace_back(std::stoi(m[1]), entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FrameRecord> frames;
  for (const auto& [index, path] : files) {
    FrameRecord f;
    f.index = index;
    f.image = ReadPng(path);
    f.channel = f.image.channels == 3 ? ChannelTag::kRgb : ChannelTag::kRed;
    f.source_id = path.filename().string();
    if (!frames.empty()) {
      GASTRO_CHECK(f.image.width == frames.front().image.width &&
                       f.image.height == frames.front().image.height,
                   ErrorKind::kInvalidInput, "frame " + f.source_id + " has different size");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

PreprocessManifest RunPreprocess(const std::filesystem::path& in_dir,
                                 const std::filesystem::path& out_dir,
                                 const PreprocessOptions& options) {
  auto frames = LoadFrameSequence(in_dir);
  GASTRO_CHECK(!frames.empty(), ErrorKind::kInvalidInput,
               "no frame_%06d.png files in " + in_dir.string());
  const std::size_t end = std::min(options.range_end, frames.size());
  frames = SelectRange(frames, options.range_begin, end);
  GASTRO_CHECK(!frames.empty(), ErrorKind::kInvalidInput, "selected range is empty");
  for (auto& f : frames) f = ExtractChannel(f, options.channel);
  frames = DedupFrames(frames, options.dedup_tau);

  std::filesystem::create_directories(out_dir);
  PreprocessManifest manifest;
  manifest.channel = ToString(options.channel);
  manifest.tau = options.dedup_tau;
  for (const auto& f : frames) {
    const std::string name = FrameFileName(f.index);
    WritePng(out_dir / name, f.image);
    manifest.kept_indices.push_back(f.index);
    manifest.files.push_back(name);
  }
  nlohmann::json j;
  j["channel"] = manifest.channel;
  j["tau"] = manifest.tau;
  j["kept_indices"] = manifest.kept_indices;
  j["files"] = manifest.files;
  std::ofstream(out_dir / "manifest.json") << j.dump(2) << "\n";
  return manifest;
}

PreprocessManifest ReadPreprocessManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  GASTRO_CHECK(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  PreprocessManifest m;
  m.channel = j.at("channel").get<std::string>();
  m.tau = j.at("tau").get<double>();
  m.kept_indices = j.at("kept_indices").get<std::vector<int>>();
  m.files = j.at("files").get<std::vector<std::string>>();
  return m;
}

}  // namespace gastro
