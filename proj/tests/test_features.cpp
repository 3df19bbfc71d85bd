#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "gastro/error.hpp"
#include "gastro/features.hpp"
#include "gastro/preprocess.hpp"
#include "gastro/synthbench.hpp"
#include "support.hpp"

namespace gastro {
namespace {

Image RenderedRed(int width, int height) {
  SceneParams params;
  const SyntheticScene scene(params);
  const Image rgb = RenderView(scene, SyntheticIntrinsics(width, height), scene.trajectory()[3]);
  FrameRecord f;
  f.image = rgb;
  return ExtractChannel(f, ChannelTag::kRed).image;
}

// 90 degrees clockwise: (x, y) -> (h - 1 - y, x).
Image RotateClockwise(const Image& in) {
  Image out(in.height, in.width, 1);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) out.at(in.height - 1 - y, x) = in.at(x, y);
  return out;
}

DescriptorMatrix RandomDescriptors(int rows, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  DescriptorMatrix d(rows, kDescriptorSize);
  for (int i = 0; i < rows; ++i) {
    for (int k = 0; k < kDescriptorSize; ++k) d(i, k) = n(rng);
    d.row(i).normalize();
  }
  return d;
}

struct OracleResult {
  std::set<std::pair<int, int>> matches;
  std::set<int> ambiguous_rows;  // rows whose decision sits on a ratio boundary
};

struct Best {
  int index = -1;
  double first = INFINITY;
  double second = INFINITY;
};

Best Nearest(const DescriptorMatrix& q, int row, const DescriptorMatrix& db) {
  Best b;
  for (int j = 0; j < db.rows(); ++j) {
    const double d = (q.row(row).cast<double>() - db.row(j).cast<double>()).norm();
    if (d < b.first) {
      b.second = b.first;
      b.first = d;
      b.index = j;
    } else if (d < b.second) {
      b.second = d;
    }
  }
  return b;
}

OracleResult BruteForceMatch(const DescriptorMatrix& a, const DescriptorMatrix& b, double ratio) {
  OracleResult out;
  for (int i = 0; i < a.rows(); ++i) {
    const Best fwd = Nearest(a, i, b);
    const Best bwd = Nearest(b, fwd.index, a);
    const double m1 = fwd.first - ratio * fwd.second;
    const double m2 = bwd.first - ratio * bwd.second;
    if (std::abs(m1) < 1e-4 || std::abs(m2) < 1e-4 || fwd.second - fwd.first < 1e-4 ||
        bwd.second - bwd.first < 1e-4) {
      out.ambiguous_rows.insert(i);
      continue;
    }
    if (bwd.index == i && m1 < 0 && m2 < 0) out.matches.insert({i, fwd.index});
  }
  return out;
}

TEST(Features, ConstantImageHasNoKeypoints) {
  const Image flat(128, 96, 1, 120);
  EXPECT_EQ(DetectAndDescribe(flat).size(), 0u);
}

TEST(Features, RejectsTinyImages) {
  EXPECT_THROW(DetectAndDescribe(Image(32, 32, 1)), Error);
  EXPECT_THROW(DetectAndDescribe(Image(128, 40, 1)), Error);
}

TEST(Features, GaussianBlobLocalized) {
  const double sigma = 4.0;
  Image img(200, 200, 1);
  for (int y = 0; y < 200; ++y) {
    for (int x = 0; x < 200; ++x) {
      const double r2 = (x - 100.0) * (x - 100.0) + (y - 100.0) * (y - 100.0);
      img.at(x, y) = static_cast<std::uint8_t>(
          std::lround(20.0 + 200.0 * std::exp(-r2 / (2.0 * sigma * sigma))));
    }
  }
  const FeatureSet fs = DetectAndDescribe(img);
  ASSERT_GE(fs.size(), 1u);
  bool found = false;
  for (const auto& kp : fs.keypoints) {
    if (std::hypot(kp.x - 100.0, kp.y - 100.0) <= 2.0 && kp.scale >= sigma / 2.0 &&
        kp.scale <= sigma * 2.0) {
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Features, RotationInvariantMatching) {
  const Image img = RenderedRed(320, 240);
  const Image rot = RotateClockwise(img);
  const FeatureSet fa = DetectAndDescribe(img);
  const FeatureSet fb = DetectAndDescribe(rot);
  ASSERT_GT(fa.size(), 30u);
  const auto matches = MatchPair(fa.descriptors, fb.descriptors);
  ASSERT_GT(matches.size(), 10u);
  int correct = 0;
  for (const auto& m : matches) {
    const auto& p = fa.keypoints[m.index1];
    const auto& q = fb.keypoints[m.index2];
    const double ex = img.height - 1 - p.y;
    const double ey = p.x;
    if (std::hypot(q.x - ex, q.y - ey) <= 2.0) ++correct;
  }
  EXPECT_GE(correct, static_cast<int>(matches.size() + 1) / 2)
      << correct << " of " << matches.size();
}

TEST(Features, SelfMatchesHaveZeroDistance) {
  const FeatureSet fs = DetectAndDescribe(RenderedRed(320, 240));
  const auto matches = MatchPair(fs.descriptors, fs.descriptors);
  ASSERT_GT(matches.size(), fs.size() / 2);
  for (const auto& m : matches) {
    EXPECT_EQ(m.index1, m.index2);
    EXPECT_EQ(m.distance, 0.0f);
  }
}

TEST(Features, RatioArithmetic) {
  EXPECT_TRUE(PassesRatioTest(0.4, 0.9, 0.8));
  EXPECT_FALSE(PassesRatioTest(0.8, 0.9, 0.8));
  EXPECT_FALSE(PassesRatioTest(0.75, 0.9, 0.8));
  EXPECT_TRUE(PassesRatioTest(0.0, 0.0001, 0.8));
  EXPECT_FALSE(PassesRatioTest(0.0, 0.0, 0.8));
}

TEST(Features, ExhaustivePairCount) {
  std::mt19937_64 rng(3);
  std::vector<FeatureSet> sets(5);
  for (auto& s : sets) {
    s.descriptors = RandomDescriptors(20, rng);
    s.keypoints.resize(20);
  }
  const auto all = MatchExhaustive(sets);
  ASSERT_EQ(all.size(), 10u);
  std::size_t k = 0;
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j, ++k) {
      EXPECT_EQ(all[k].image1, i);
      EXPECT_EQ(all[k].image2, j);
      EXPECT_EQ(PairIndex(i, j, 5), k);
    }
  }
  EXPECT_THROW(MatchExhaustive({sets[0]}), Error);
}

TEST(Features, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> noise(0.0f, 0.03f);
  for (int trial = 0; trial < 4; ++trial) {
    const DescriptorMatrix a = RandomDescriptors(150, rng);
    DescriptorMatrix b = RandomDescriptors(120, rng);
    std::vector<int> perm(150);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int r = 0; r < 80; ++r) {
      for (int k = 0; k < kDescriptorSize; ++k) b(r, k) = a(perm[r], k) + noise(rng);
      b.row(r).normalize();
    }
    const OracleResult oracle = BruteForceMatch(a, b, 0.8);
    std::set<std::pair<int, int>> got;
    for (const auto& m : MatchPair(a, b)) {
      if (!oracle.ambiguous_rows.count(m.index1)) got.insert({m.index1, m.index2});
      EXPECT_NEAR(m.distance, (a.row(m.index1) - b.row(m.index2)).norm(), 1e-5);
    }
    EXPECT_EQ(got, oracle.matches);
    EXPECT_GE(oracle.matches.size(), 60u);
  }
}

TEST(Features, MatchingIsSymmetric) {
  std::mt19937_64 rng(12);
  const DescriptorMatrix a = RandomDescriptors(60, rng);
  DescriptorMatrix b = a.topRows(40);
  b.row(0) = a.row(59);
  const auto ab = MatchPair(a, b);
  const auto ba = MatchPair(b, a);
  ASSERT_EQ(ab.size(), ba.size());
  std::set<std::pair<int, int>> s1, s2;
  for (const auto& m : ab) s1.insert({m.index1, m.index2});
  for (const auto& m : ba) s2.insert({m.index2, m.index1});
  EXPECT_EQ(s1, s2);
}

TEST(Features, CacheRoundTrip) {
  const auto dir = testing::TempDir("feature_cache");
  const Image img = RenderedRed(160, 120);
  SiftOptions options;
  const FeatureSet direct = DetectAndDescribe(img, options);
  const std::uint64_t key = ContentHash(img, options);

  const auto path = dir / "one.feat";
  WriteFeatureFile(path, direct, key);
  const auto back = ReadFeatureFile(path, key);
  ASSERT_TRUE(back.has_value());
  ASSERT_EQ(back->size(), direct.size());
  EXPECT_EQ(back->width, direct.width);
  EXPECT_EQ(back->height, direct.height);
  for (std::size_t i = 0; i < direct.size(); ++i) {
    EXPECT_EQ(back->keypoints[i].x, direct.keypoints[i].x);
    EXPECT_EQ(back->keypoints[i].scale, direct.keypoints[i].scale);
    EXPECT_EQ(back->keypoints[i].orientation, direct.keypoints[i].orientation);
  }
  EXPECT_TRUE(back->descriptors == direct.descriptors);
  EXPECT_FALSE(ReadFeatureFile(path, key + 1).has_value());
  EXPECT_FALSE(ReadFeatureFile(dir / "missing.feat", key).has_value());

  SiftOptions other = options;
  other.max_features = 10;
  EXPECT_NE(ContentHash(img, other), key);

  const FeatureCache cache(dir / "cache");
  const FeatureSet first = cache.Get(img, options);
  EXPECT_TRUE(std::filesystem::exists(cache.PathFor(key)));
  const FeatureSet second = cache.Get(img, options);
  EXPECT_TRUE(second.descriptors == first.descriptors);
  EXPECT_TRUE(first.descriptors == direct.descriptors);
}

}  // namespace
}  // namespace gastro
