#include "gastro/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "gastro/error.hpp"
#include "gastro/parallel.hpp"

namespace gastro {

namespace {

constexpr int kImageBorder = 5;
constexpr int kMaxInterpSteps = 5;
constexpr int kOriHistBins = 36;
constexpr float kOriSigFactor = 1.5f;
constexpr float kOriRadiusFactor = 3.0f * kOriSigFactor;
constexpr float kOriPeakRatio = 0.8f;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr float kDescSclFactor = 3.0f;
constexpr float kDescMagThreshold = 0.2f;
constexpr float kTwoPi = 6.283185307179586f;

void GaussianBlur(const ImageF& src, ImageF* dst, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.5 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (auto& k : kernel) k = static_cast<float>(k / sum);

  const int w = src.width;
  const int h = src.height;
  ImageF tmp(w, h);
  std::vector<float> row(w + 2 * radius);
  for (int y = 0; y < h; ++y) {
    const float* s = &src.data[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w + 2 * radius; ++x) row[x] = s[std::clamp(x - radius, 0, w - 1)];
    float* t = &tmp.data[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = 0; k <= 2 * radius; ++k) acc += kernel[k] * row[x + k];
      t[x] = acc;
    }
  }
  *dst = ImageF(w, h);
  std::vector<float> acc(w);
  for (int y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (int k = -radius; k <= radius; ++k) {
      const float kv = kernel[k + radius];
      const float* t = &tmp.data[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w];
      for (int x = 0; x < w; ++x) acc[x] += kv * t[x];
    }
    std::copy(acc.begin(), acc.end(), dst->data.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
}

ImageF Decimate(const ImageF& src) {
  ImageF out(src.width / 2, src.height / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = src.at(2 * x, 2 * y);
  return out;
}

struct Octave {
  std::vector<ImageF> gauss;  // S + 3 levels
  std::vector<ImageF> dog;    // S + 2 levels
  std::vector<ImageF> grad_mag;  // per gauss level (filled lazily for 1..S)
  std::vector<ImageF> grad_ori;
};

void ComputeGradients(const ImageF& img, ImageF* mag, ImageF* ori) {
  *mag = ImageF(img.width, img.height);
  *ori = ImageF(img.width, img.height);
  for (int y = 1; y + 1 < img.height; ++y) {
    for (int x = 1; x + 1 < img.width; ++x) {
      const float dx = img.at(x + 1, y) - img.at(x - 1, y);
      const float dy = img.at(x, y + 1) - img.at(x, y - 1);
      mag->at(x, y) = std::sqrt(dx * dx + dy * dy);
      float a = std::atan2(dy, dx);
      if (a < 0.0f) a += kTwoPi;
      ori->at(x, y) = a;
    }
  }
}

std::vector<Octave> BuildPyramid(const ImageF& input, const SiftOptions& opt) {
  const int s = opt.scales_per_octave;
  const double k = std::pow(2.0, 1.0 / s);
  std::vector<double> sigma_inc(s + 3, 0.0);
  for (int i = 1; i < s + 3; ++i) {
    const double prev = opt.sigma0 * std::pow(k, i - 1);
    const double total = prev * k;
    sigma_inc[i] = std::sqrt(total * total - prev * prev);
  }

  ImageF base;
  const double init = std::sqrt(std::max(opt.sigma0 * opt.sigma0 - opt.input_blur * opt.input_blur, 0.01));
  GaussianBlur(input, &base, init);

  std::vector<Octave> octaves;
  while (std::min(base.width, base.height) >= opt.min_octave_size) {
    Octave oct;
    oct.gauss.resize(s + 3);
    oct.gauss[0] = std::move(base);
    for (int i = 1; i < s + 3; ++i) GaussianBlur(oct.gauss[i - 1], &oct.gauss[i], sigma_inc[i]);
    oct.dog.resize(s + 2);
    for (int i = 0; i < s + 2; ++i) {
      oct.dog[i] = ImageF(oct.gauss[i].width, oct.gauss[i].height);
      for (std::size_t p = 0; p < oct.dog[i].data.size(); ++p)
        oct.dog[i].data[p] = oct.gauss[i + 1].data[p] - oct.gauss[i].data[p];
    }
    oct.grad_mag.resize(s + 3);
    oct.grad_ori.resize(s + 3);
    for (int i = 1; i <= s; ++i) ComputeGradients(oct.gauss[i], &oct.grad_mag[i], &oct.grad_ori[i]);
    base = Decimate(oct.gauss[s]);
    octaves.push_back(std::move(oct));
  }
  return octaves;
}

struct Candidate {
  Keypoint kp;
  int octave = 0;
  int layer = 0;
  float octave_sigma = 0.0f;  // sigma in octave pixels
};

bool IsExtremum(const Octave& oct, int layer, int x, int y, float v) {
  const bool is_max = v > 0.0f;
  for (int l = layer - 1; l <= layer + 1; ++l) {
    const ImageF& d = oct.dog[l];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (l == layer && dx == 0 && dy == 0) continue;
        const float n = d.at(x + dx, y + dy);
        if (is_max ? (n > v) : (n < v)) return false;
      }
    }
  }
  return true;
}

// Quadratic refinement in (x, y, scale); false rejects the extremum.
bool RefineExtremum(const Octave& oct, const SiftOptions& opt, int octave_index, int* layer,
                    int* x, int* y, Candidate* out) {
  const int s = opt.scales_per_octave;
  const int w = oct.dog[0].width;
  const int h = oct.dog[0].height;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  Eigen::Vector3d grad;
  float value = 0.0f;
  int iter = 0;
  for (; iter < kMaxInterpSteps; ++iter) {
    const ImageF& prev = oct.dog[*layer - 1];
    const ImageF& cur = oct.dog[*layer];
    const ImageF& next = oct.dog[*layer + 1];
    const int cx = *x;
    const int cy = *y;
    value = cur.at(cx, cy);
    grad << 0.5 * (cur.at(cx + 1, cy) - cur.at(cx - 1, cy)),
        0.5 * (cur.at(cx, cy + 1) - cur.at(cx, cy - 1)),
        0.5 * (next.at(cx, cy) - prev.at(cx, cy));
    const double dxx = cur.at(cx + 1, cy) + cur.at(cx - 1, cy) - 2.0 * value;
    const double dyy = cur.at(cx, cy + 1) + cur.at(cx, cy - 1) - 2.0 * value;
    const double dss = next.at(cx, cy) + prev.at(cx, cy) - 2.0 * value;
    const double dxy = 0.25 * (cur.at(cx + 1, cy + 1) - cur.at(cx - 1, cy + 1) -
                               cur.at(cx + 1, cy - 1) + cur.at(cx - 1, cy - 1));
    const double dxs = 0.25 * (next.at(cx + 1, cy) - next.at(cx - 1, cy) -
                               prev.at(cx + 1, cy) + prev.at(cx - 1, cy));
    const double dys = 0.25 * (next.at(cx, cy + 1) - next.at(cx, cy - 1) -
                               prev.at(cx, cy + 1) + prev.at(cx, cy - 1));
    Eigen::Matrix3d hess;
    hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
    offset = -hess.fullPivLu().solve(grad);
    if (!offset.allFinite()) return false;
    if (offset.cwiseAbs().maxCoeff() < 0.5) break;
    if (offset.cwiseAbs().maxCoeff() > 1e6) return false;
    *x += static_cast<int>(std::lround(offset.x()));
    *y += static_cast<int>(std::lround(offset.y()));
    *layer += static_cast<int>(std::lround(offset.z()));
    if (*layer < 1 || *layer > s || *x < kImageBorder || *x >= w - kImageBorder ||
        *y < kImageBorder || *y >= h - kImageBorder) {
      return false;
    }
  }
  if (iter >= kMaxInterpSteps) return false;

  const double contrast = value + 0.5 * grad.dot(offset);
  if (std::abs(contrast) * s < opt.contrast_threshold) return false;

  const ImageF& cur = oct.dog[*layer];
  const int cx = *x;
  const int cy = *y;
  const double v2 = 2.0 * cur.at(cx, cy);
  const double dxx = cur.at(cx + 1, cy) + cur.at(cx - 1, cy) - v2;
  const double dyy = cur.at(cx, cy + 1) + cur.at(cx, cy - 1) - v2;
  const double dxy = 0.25 * (cur.at(cx + 1, cy + 1) - cur.at(cx - 1, cy + 1) -
                             cur.at(cx + 1, cy - 1) + cur.at(cx - 1, cy - 1));
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double r = opt.edge_threshold;
  if (det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det) return false;

  const double octave_scale = std::ldexp(1.0, octave_index);
  out->octave = octave_index;
  out->layer = *layer;
  out->octave_sigma =
      static_cast<float>(opt.sigma0 * std::pow(2.0, (*layer + offset.z()) / s));
  out->kp.x = static_cast<float>((cx + offset.x()) * octave_scale);
  out->kp.y = static_cast<float>((cy + offset.y()) * octave_scale);
  out->kp.scale = static_cast<float>(out->octave_sigma * octave_scale);
  out->kp.response = static_cast<float>(std::abs(contrast));
  return true;
}

std::vector<float> OrientationPeaks(const Octave& oct, const Candidate& c) {
  const ImageF& mag = oct.grad_mag[c.layer];
  const ImageF& ori = oct.grad_ori[c.layer];
  const double octave_scale = std::ldexp(1.0, c.octave);
  const int px = static_cast<int>(std::lround(c.kp.x / octave_scale));
  const int py = static_cast<int>(std::lround(c.kp.y / octave_scale));
  const float sigma_w = kOriSigFactor * c.octave_sigma;
  const int radius = static_cast<int>(std::lround(kOriRadiusFactor * c.octave_sigma));
  const float expf_scale = -1.0f / (2.0f * sigma_w * sigma_w);

  std::array<float, kOriHistBins> hist{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = py + i;
    if (y <= 0 || y >= mag.height - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = px + j;
      if (x <= 0 || x >= mag.width - 1) continue;
      const float weight = std::exp((i * i + j * j) * expf_scale);
      int bin = static_cast<int>(std::lround(kOriHistBins * ori.at(x, y) / kTwoPi));
      bin = ((bin % kOriHistBins) + kOriHistBins) % kOriHistBins;
      hist[bin] += weight * mag.at(x, y);
    }
  }
  std::array<float, kOriHistBins> smooth{};
  for (int i = 0; i < kOriHistBins; ++i) {
    auto at = [&](int k) { return hist[(k + kOriHistBins) % kOriHistBins]; };
    smooth[i] = (at(i - 2) + at(i + 2)) * (1.0f / 16.0f) + (at(i - 1) + at(i + 1)) * (4.0f / 16.0f) +
                at(i) * (6.0f / 16.0f);
  }
  const float max_val = *std::max_element(smooth.begin(), smooth.end());
  std::vector<float> peaks;
  if (!(max_val > 0.0f)) return peaks;
  for (int i = 0; i < kOriHistBins; ++i) {
    const float l = smooth[(i + kOriHistBins - 1) % kOriHistBins];
    const float r = smooth[(i + 1) % kOriHistBins];
    const float v = smooth[i];
    if (v > l && v > r && v >= kOriPeakRatio * max_val) {
      float bin = i + 0.5f * (l - r) / (l - 2.0f * v + r);
      if (bin < 0.0f) bin += kOriHistBins;
      if (bin >= kOriHistBins) bin -= kOriHistBins;
      float angle = kTwoPi * bin / kOriHistBins;
      if (angle >= kTwoPi) angle -= kTwoPi;
      peaks.push_back(angle);
    }
  }
  return peaks;
}

void ComputeDescriptor(const Octave& oct, const Candidate& c, float* out) {
  const ImageF& mag = oct.grad_mag[c.layer];
  const ImageF& ori = oct.grad_ori[c.layer];
  const double octave_scale = std::ldexp(1.0, c.octave);
  const int px = static_cast<int>(std::lround(c.kp.x / octave_scale));
  const int py = static_cast<int>(std::lround(c.kp.y / octave_scale));
  const float angle = c.kp.orientation;
  const float cos_t = std::cos(angle);
  const float sin_t = std::sin(angle);
  const float hist_width = kDescSclFactor * c.octave_sigma;
  int radius = static_cast<int>(std::lround(hist_width * std::sqrt(2.0f) * (kDescWidth + 1) * 0.5f));
  radius = std::min(radius, static_cast<int>(std::hypot(mag.width, mag.height)));
  const float bins_per_rad = kDescBins / kTwoPi;
  const float exp_scale = -1.0f / (kDescWidth * kDescWidth * 0.5f);

  constexpr int kH = kDescWidth + 2;
  constexpr int kB = kDescBins + 2;
  std::array<float, kH * kH * kB> hist{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = py + i;
    if (y <= 0 || y >= mag.height - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = px + j;
      if (x <= 0 || x >= mag.width - 1) continue;
      // Offset rotated into the keypoint frame, in histogram-cell units.
      const float c_rot = (j * cos_t + i * sin_t) / hist_width;
      const float r_rot = (-j * sin_t + i * cos_t) / hist_width;
      const float rbin = r_rot + kDescWidth / 2 - 0.5f;
      const float cbin = c_rot + kDescWidth / 2 - 0.5f;
      if (!(rbin > -1.0f && rbin < kDescWidth && cbin > -1.0f && cbin < kDescWidth)) continue;
      float rel = ori.at(x, y) - angle;
      if (rel < 0.0f) rel += kTwoPi;
      if (rel >= kTwoPi) rel -= kTwoPi;
      const float obin = rel * bins_per_rad;
      const float weight = std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
      const float m = mag.at(x, y) * weight;

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const float dr = rbin - r0;
      const float dc = cbin - c0;
      const float dob = obin - o0;
      if (o0 < 0) o0 += kDescBins;
      if (o0 >= kDescBins) o0 -= kDescBins;
      for (int a = 0; a < 2; ++a) {
        const float wr = a == 0 ? 1.0f - dr : dr;
        for (int b = 0; b < 2; ++b) {
          const float wc = b == 0 ? 1.0f - dc : dc;
          for (int d = 0; d < 2; ++d) {
            const float wo = d == 0 ? 1.0f - dob : dob;
            const int idx = ((r0 + 1 + a) * kH + (c0 + 1 + b)) * kB + (o0 + d);
            hist[idx] += m * wr * wc * wo;
          }
        }
      }
    }
  }
  // Fold the wrap-around orientation bin and drop the padding cells.
  for (int r = 0; r < kDescWidth; ++r) {
    for (int cc = 0; cc < kDescWidth; ++cc) {
      const int base = ((r + 1) * kH + (cc + 1)) * kB;
      hist[base] += hist[base + kDescBins];
      hist[base + 1] += hist[base + kDescBins + 1];
      for (int o = 0; o < kDescBins; ++o) out[(r * kDescWidth + cc) * kDescBins + o] = hist[base + o];
    }
  }
  double norm_sq = 0.0;
  for (int i = 0; i < kDescriptorSize; ++i) norm_sq += static_cast<double>(out[i]) * out[i];
  const float threshold = static_cast<float>(std::sqrt(norm_sq)) * kDescMagThreshold;
  norm_sq = 0.0;
  for (int i = 0; i < kDescriptorSize; ++i) {
    out[i] = std::min(out[i], threshold);
    norm_sq += static_cast<double>(out[i]) * out[i];
  }
  const double norm = std::sqrt(norm_sq);
  if (norm > 0.0) {
    for (int i = 0; i < kDescriptorSize; ++i) out[i] = static_cast<float>(out[i] / norm);
  }
}

}  // namespace

FeatureSet DetectAndDescribe(const Image& image, const SiftOptions& opt) {
  GASTRO_CHECK(image.width >= 64 && image.height >= 64, ErrorKind::kInvalidInput,
               "feature detection needs an image of at least 64x64");
  FeatureSet result;
  result.width = image.width;
  result.height = image.height;
  const ImageF input = ToFloat(image);
  const auto octaves = BuildPyramid(input, opt);
  const int s = opt.scales_per_octave;
  const float prefilter = static_cast<float>(0.5 * opt.contrast_threshold / s);

  std::vector<Candidate> candidates;
  for (int o = 0; o < static_cast<int>(octaves.size()); ++o) {
    const Octave& oct = octaves[o];
    const int w = oct.dog[0].width;
    const int h = oct.dog[0].height;
    for (int layer = 1; layer <= s; ++layer) {
      for (int y = kImageBorder; y < h - kImageBorder; ++y) {
        for (int x = kImageBorder; x < w - kImageBorder; ++x) {
          const float v = oct.dog[layer].at(x, y);
          if (std::abs(v) <= prefilter) continue;
          if (!IsExtremum(oct, layer, x, y, v)) continue;
          int rl = layer;
          int rx = x;
          int ry = y;
          Candidate c;
          if (!RefineExtremum(oct, opt, o, &rl, &rx, &ry, &c)) continue;
          if (!(c.kp.x >= 0.0f && c.kp.y >= 0.0f && c.kp.x < image.width &&
                c.kp.y < image.height)) {
            continue;
          }
          for (float angle : OrientationPeaks(oct, c)) {
            Candidate oriented = c;
            oriented.kp.orientation = angle;
            candidates.push_back(oriented);
          }
        }
      }
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.kp.response != b.kp.response) return a.kp.response > b.kp.response;
    if (a.kp.y != b.kp.y) return a.kp.y < b.kp.y;
    if (a.kp.x != b.kp.x) return a.kp.x < b.kp.x;
    return a.kp.orientation < b.kp.orientation;
  });
  if (opt.max_features > 0 && candidates.size() > static_cast<std::size_t>(opt.max_features)) {
    candidates.resize(static_cast<std::size_t>(opt.max_features));
  }

  result.keypoints.reserve(candidates.size());
  result.descriptors.resize(static_cast<Eigen::Index>(candidates.size()), kDescriptorSize);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    result.keypoints.push_back(candidates[i].kp);
    ComputeDescriptor(octaves[candidates[i].octave], candidates[i],
                      result.descriptors.row(static_cast<Eigen::Index>(i)).data());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Matching

namespace {

struct Nearest {
  int best = -1;
  float best_dot = -std::numeric_limits<float>::infinity();
  float second_dot = -std::numeric_limits<float>::infinity();
};

void Offer(Nearest* n, int idx, float dot) {
  if (dot > n->best_dot) {
    n->second_dot = n->best_dot;
    n->best_dot = dot;
    n->best = idx;
  } else if (dot > n->second_dot) {
    n->second_dot = dot;
  }
}

double DistanceFromDot(float dot) {
  if (dot == -std::numeric_limits<float>::infinity()) return std::numeric_limits<double>::infinity();
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * static_cast<double>(dot)));
}

}  // namespace

namespace {

// True when (a, b) is the canonical argument order; the swapped call is
// answered by transposing the canonical result so matching is symmetric bit for bit.
bool IsCanonicalOrder(const DescriptorMatrix& a, const DescriptorMatrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) <= 0;
}

}  // namespace

std::vector<Match> MatchPair(const DescriptorMatrix& a, const DescriptorMatrix& b,
                             const MatchOptions& options) {
  if (!IsCanonicalOrder(a, b)) {
    auto swapped = MatchPair(b, a, options);
    for (auto& m : swapped) std::swap(m.index1, m.index2);
    std::sort(swapped.begin(), swapped.end(),
              [](const Match& x, const Match& y) { return x.index1 < y.index1; });
    return swapped;
  }
  std::vector<Match> matches;
  if (a.rows() == 0 || b.rows() == 0) return matches;
  const Eigen::MatrixXf dots = a * b.transpose();
  std::vector<Nearest> row_best(static_cast<std::size_t>(a.rows()));
  std::vector<Nearest> col_best(static_cast<std::size_t>(b.rows()));
  for (Eigen::Index j = 0; j < dots.cols(); ++j) {
    for (Eigen::Index i = 0; i < dots.rows(); ++i) {
      const float d = dots(i, j);
      Offer(&row_best[i], static_cast<int>(j), d);
      Offer(&col_best[j], static_cast<int>(i), d);
    }
  }
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Nearest& rn = row_best[i];
    if (rn.best < 0) continue;
    if (!PassesRatioTest(DistanceFromDot(rn.best_dot), DistanceFromDot(rn.second_dot),
                         options.ratio)) {
      continue;
    }
    const Nearest& cn = col_best[rn.best];
    if (options.cross_check) {
      if (cn.best != i) continue;
      if (!PassesRatioTest(DistanceFromDot(cn.best_dot), DistanceFromDot(cn.second_dot),
                           options.ratio)) {
        continue;
      }
    }
    Match m;
    m.index1 = static_cast<int>(i);
    m.index2 = rn.best;
    m.distance = static_cast<float>(
        (a.row(i).cast<double>() - b.row(rn.best).cast<double>()).norm());
    matches.push_back(m);
  }
  return matches;
}

std::size_t PairIndex(int i, int j, int n) {
  // Pairs (0,1), (0,2), ..., (0,n-1), (1,2), ...
  const std::size_t ii = static_cast<std::size_t>(i);
  const std::size_t nn = static_cast<std::size_t>(n);
  return ii * nn - ii * (ii + 1) / 2 + static_cast<std::size_t>(j - i - 1);
}

std::vector<MatchSet> MatchExhaustive(const std::vector<FeatureSet>& features,
                                      const MatchOptions& options) {
  const int n = static_cast<int>(features.size());
  GASTRO_CHECK(n >= 2, ErrorKind::kInvalidInput, "matching needs at least two images");
  std::vector<MatchSet> out(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      auto& ms = out[PairIndex(i, j, n)];
      ms.image1 = i;
      ms.image2 = j;
    }
  }
  ParallelFor(0, out.size(), [&](std::size_t p) {
    auto& ms = out[p];
    ms.matches = MatchPair(features[ms.image1].descriptors, features[ms.image2].descriptors,
                           options);
  });
  return out;
}

}  // namespace gastro
