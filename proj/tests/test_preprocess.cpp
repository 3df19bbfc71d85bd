#include <gtest/gtest.h>

#include <random>

#include "gastro/error.hpp"
#include "gastro/image_io.hpp"
#include "gastro/preprocess.hpp"
#include "gastro/synthbench.hpp"
#include "support.hpp"

namespace gastro {
namespace {

FrameRecord ConstantFrame(int index, std::uint8_t value, int channels = 1) {
  FrameRecord f;
  f.index = index;
  f.image = Image(64, 48, channels, value);
  f.channel = channels == 3 ? ChannelTag::kRgb : ChannelTag::kRed;
  return f;
}

std::vector<int> Indices(const std::vector<FrameRecord>& frames) {
  std::vector<int> out;
  for (const auto& f : frames) out.push_back(f.index);
  return out;
}

FrameRecord RandomRgbFrame(std::mt19937_64& rng) {
  FrameRecord f;
  f.index = 3;
  f.source_id = "x";
  f.image = Image(37, 23, 3);
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& v : f.image.data) v = static_cast<std::uint8_t>(u(rng));
  return f;
}

TEST(Preprocess, SplitPixelExample) {
  FrameRecord f = ConstantFrame(0, 0, 3);
  f.image = Image(1, 1, 3);
  f.image.data = {10, 20, 30};
  const auto planes = SplitChannels(f);
  EXPECT_EQ(planes[0].image.data[0], 10);
  EXPECT_EQ(planes[1].image.data[0], 20);
  EXPECT_EQ(planes[2].image.data[0], 30);
  EXPECT_EQ(planes[0].channel, ChannelTag::kRed);
  EXPECT_EQ(planes[1].channel, ChannelTag::kGreen);
  EXPECT_EQ(planes[2].channel, ChannelTag::kBlue);
  EXPECT_EQ(planes[0].image.channels, 1);
}

TEST(Preprocess, SplitInterleaveRoundTrip) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const FrameRecord f = RandomRgbFrame(rng);
    const auto p = SplitChannels(f);
    const FrameRecord back = InterleaveChannels(p[0], p[1], p[2]);
    EXPECT_EQ(back.image, f.image);
    EXPECT_EQ(back.index, f.index);
    EXPECT_EQ(back.source_id, f.source_id);
  }
}

TEST(Preprocess, SplitRejectsSingleChannel) {
  EXPECT_THROW(SplitChannels(ConstantFrame(0, 5)), Error);
}

TEST(Preprocess, DedupExamples) {
  const std::vector<FrameRecord> frames = {ConstantFrame(0, 100), ConstantFrame(1, 101),
                                           ConstantFrame(2, 103), ConstantFrame(3, 103),
                                           ConstantFrame(4, 110)};
  EXPECT_EQ(Indices(DedupFrames(frames, 2.0)), (std::vector<int>{0, 2, 4}));
  EXPECT_EQ(Indices(DedupFrames(frames, 0.0)), (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(Indices(DedupFrames(frames, 100.0)), (std::vector<int>{0}));
}

TEST(Preprocess, DedupExactTauIsKept) {
  const std::vector<FrameRecord> frames = {ConstantFrame(0, 50), ConstantFrame(1, 53)};
  EXPECT_DOUBLE_EQ(MeanAbsoluteDifference(frames[0].image, frames[1].image), 3.0);
  EXPECT_EQ(Indices(DedupFrames(frames, 3.0)), (std::vector<int>{0, 1}));
  EXPECT_EQ(Indices(DedupFrames(frames, 3.0 + 1e-9)), (std::vector<int>{0}));
}

TEST(Preprocess, DedupIdempotentSubsequence) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> step(0, 4);
  std::vector<FrameRecord> frames;
  int value = 60;
  for (int i = 0; i < 60; ++i) {
    value += step(rng);
    frames.push_back(ConstantFrame(i, static_cast<std::uint8_t>(value)));
  }
  for (double tau : {0.5, 2.0, 3.0, 7.0}) {
    const auto once = DedupFrames(frames, tau);
    const auto twice = DedupFrames(once, tau);
    EXPECT_EQ(Indices(once), Indices(twice));
    ASSERT_FALSE(once.empty());
    EXPECT_EQ(once.front().index, 0);
    for (std::size_t i = 1; i < once.size(); ++i) {
      EXPECT_LT(once[i - 1].index, once[i].index);
      EXPECT_GE(MeanAbsoluteDifference(once[i].image, once[i - 1].image), tau);
    }
  }
}

TEST(Preprocess, DedupErrors) {
  EXPECT_THROW(DedupFrames({}, 1.0), Error);
  EXPECT_THROW(DedupFrames({ConstantFrame(0, 1)}, -1.0), Error);
  EXPECT_THROW(MeanAbsoluteDifference(Image(4, 4, 1), Image(4, 5, 1)), Error);
}

TEST(Preprocess, SelectRangeExamples) {
  std::vector<FrameRecord> frames;
  for (int i = 0; i < 10; ++i) frames.push_back(ConstantFrame(i, 0));
  EXPECT_EQ(Indices(SelectRange(frames, 2, 5)), (std::vector<int>{2, 3, 4}));
  EXPECT_TRUE(SelectRange(frames, 4, 4).empty());
  EXPECT_EQ(SelectRange(frames, 0, 10).size(), 10u);
  EXPECT_THROW(SelectRange(frames, 5, 3), Error);
  EXPECT_THROW(SelectRange(frames, 0, 11), Error);
}

TEST(Preprocess, RedCarriesMostTexture) {
  SceneParams params;
  params.texture = TextureVariant::kHigh;
  const SyntheticScene scene(params);
  const auto intr = SyntheticIntrinsics(320, 240);
  const Image view = RenderView(scene, intr, scene.trajectory().front());
  const double red = LaplacianStd(view, 0);
  const double green = LaplacianStd(view, 1);
  const double blue = LaplacianStd(view, 2);
  EXPECT_GT(red, green);
  EXPECT_GT(green, blue);
}

TEST(Preprocess, RunWritesManifest) {
  const auto dir = testing::TempDir("preprocess_run");
  const auto in = dir / "in";
  std::filesystem::create_directories(in);
  const std::uint8_t values[] = {10, 10, 40, 41, 90, 200};
  for (int i = 0; i < 6; ++i) {
    Image img(32, 32, 3);
    for (std::size_t p = 0; p < img.data.size(); p += 3) {
      img.data[p] = values[i];
      img.data[p + 1] = 7;
      img.data[p + 2] = 9;
    }
    WritePng(in / FrameFileName(i + 1), img);
  }
  PreprocessOptions options;
  options.range_begin = 1;
  options.range_end = 5;
  options.dedup_tau = 2.0;
  const auto m = RunPreprocess(in, dir / "out", options);
  EXPECT_EQ(m.channel, "red");
  EXPECT_EQ(m.kept_indices, (std::vector<int>{2, 3, 5}));
  EXPECT_EQ(m.files, (std::vector<std::string>{"frame_000002.png", "frame_000003.png",
                                               "frame_000005.png"}));
  const auto back = ReadPreprocessManifest(dir / "out" / "manifest.json");
  EXPECT_EQ(back.kept_indices, m.kept_indices);
  EXPECT_EQ(back.files, m.files);
  EXPECT_DOUBLE_EQ(back.tau, 2.0);
  const Image written = ReadPng(dir / "out" / "frame_000003.png");
  EXPECT_EQ(written.channels, 1);
  EXPECT_EQ(written.at(5, 5), 40);
}

TEST(Preprocess, ChannelTagNames) {
  for (auto tag : {ChannelTag::kRed, ChannelTag::kGreen, ChannelTag::kBlue, ChannelTag::kRgb}) {
    EXPECT_EQ(ParseChannelTag(ToString(tag)), tag);
  }
  EXPECT_THROW(ParseChannelTag("infrared"), Error);
}

}  // namespace
}  // namespace gastro
