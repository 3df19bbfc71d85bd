#include "gastro/sfm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "gastro/geometry.hpp"
#include "gastro/parallel.hpp"

namespace gastro {

std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

double Median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

Vec2 ToVec(const Keypoint& kp) { return Vec2(kp.x, kp.y); }

std::vector<bool> EssentialInliers(const Mat3& e, const std::vector<Vec3>& b1,
                                   const std::vector<Vec3>& b2, double threshold_sq,
                                   std::size_t* count) {
  std::vector<bool> inliers(b1.size());
  *count = 0;
  for (std::size_t i = 0; i < b1.size(); ++i) {
    inliers[i] = SampsonErrorSq(e, b1[i], b2[i]) < threshold_sq;
    *count += inliers[i];
  }
  return inliers;
}

}  // namespace

std::optional<VerifiedPair> VerifyPair(const FeatureSet& features1, const FeatureSet& features2,
                                       const MatchSet& matches, const CameraIntrinsics& intr,
                                       const SfmOptions& options) {
  if (static_cast<int>(matches.matches.size()) < std::max(options.min_pair_matches, 8)) {
    return std::nullopt;
  }
  std::vector<Vec3> b1;
  std::vector<Vec3> b2;
  std::vector<Match> used;
  for (const auto& m : matches.matches) {
    const auto u1 = TryUnproject(intr, ToVec(features1.keypoints[m.index1]));
    const auto u2 = TryUnproject(intr, ToVec(features2.keypoints[m.index2]));
    if (!u1 || !u2) continue;
    b1.push_back(*u1);
    b2.push_back(*u2);
    used.push_back(m);
  }
  const std::size_t n = b1.size();
  if (n < 8) return std::nullopt;

  const double threshold = options.essential_threshold_px / std::min(intr.focal_x, intr.focal_y);
  const double threshold_sq = threshold * threshold;
  std::mt19937_64 rng(DeriveSeed(options.seed, static_cast<std::uint64_t>(matches.image1) * 100003u +
                                                   static_cast<std::uint64_t>(matches.image2)));
  std::size_t best_count = 0;
  Mat3 best_e = Mat3::Zero();
  std::size_t iterations = options.ransac_max_iterations;
  std::array<Vec3, 8> s1;
  std::array<Vec3, 8> s2;
  for (std::size_t iter = 0; iter < iterations; ++iter) {
    const auto sample = SampleDistinct(n, 8, rng);
    for (int k = 0; k < 8; ++k) {
      s1[k] = b1[sample[k]];
      s2[k] = b2[sample[k]];
    }
    const auto e = EssentialEightPoint(s1, s2);
    if (!e) continue;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) count += SampsonErrorSq(*e, b1[i], b2[i]) < threshold_sq;
    if (count > best_count) {
      best_count = count;
      best_e = *e;
      iterations = std::min(iterations,
                            RansacIterations(static_cast<double>(count) / n, 8,
                                             options.ransac_confidence, options.ransac_max_iterations));
    }
  }
  if (static_cast<int>(best_count) < std::max(options.min_pair_inliers, 8)) return std::nullopt;

  // Refit on all inliers; keep the refit only when it does not lose support.
  std::size_t count = 0;
  std::vector<bool> inliers = EssentialInliers(best_e, b1, b2, threshold_sq, &count);
  {
    std::vector<Vec3> i1;
    std::vector<Vec3> i2;
    for (std::size_t i = 0; i < n; ++i) {
      if (!inliers[i]) continue;
      i1.push_back(b1[i]);
      i2.push_back(b2[i]);
    }
    if (const auto refit = EssentialEightPoint(i1, i2)) {
      std::size_t refit_count = 0;
      auto refit_inliers = EssentialInliers(*refit, b1, b2, threshold_sq, &refit_count);
      if (refit_count >= count) {
        best_e = *refit;
        inliers = std::move(refit_inliers);
        count = refit_count;
      }
    }
  }

  // Cheirality picks one of the four decompositions.
  const auto candidates = DecomposeEssential(best_e);
  int best_candidate = -1;
  std::size_t best_front = 0;
  for (int c = 0; c < 4; ++c) {
    const RigidPose& pose = candidates[c];
    const Vec3 center = pose.Center();
    std::size_t front = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!inliers[i]) continue;
      const auto tp = TriangulateTwoRays(Vec3::Zero(), b1[i], center,
                                         pose.rotation.transpose() * b2[i]);
      if (tp && tp->depth1 > 0.0 && tp->depth2 > 0.0) ++front;
    }
    if (front > best_front) {
      best_front = front;
      best_candidate = c;
    }
  }
  if (best_candidate < 0) return std::nullopt;

  VerifiedPair out;
  out.image1 = matches.image1;
  out.image2 = matches.image2;
  out.relative = candidates[best_candidate];
  const Vec3 center = out.relative.Center();
  std::vector<double> angles;
  for (std::size_t i = 0; i < n; ++i) {
    if (!inliers[i]) continue;
    out.inliers.push_back(used[i]);
    const Vec3 d2 = out.relative.rotation.transpose() * b2[i];
    const auto tp = TriangulateTwoRays(Vec3::Zero(), b1[i], center, d2);
    if (tp && tp->depth1 > 0.0 && tp->depth2 > 0.0) {
      angles.push_back(RadToDeg(std::atan2(b1[i].cross(d2).norm(), b1[i].dot(d2))));
    }
  }
  out.median_angle_deg = Median(angles);
  return out;
}

std::vector<VerifiedPair> VerifyAllPairs(const std::vector<FeatureSet>& features,
                                         const std::vector<MatchSet>& matches,
                                         const CameraIntrinsics& intr,
                                         const SfmOptions& options) {
  std::vector<std::optional<VerifiedPair>> slots(matches.size());
  ParallelFor(0, matches.size(), [&](std::size_t i) {
    const auto& m = matches[i];
    slots[i] = VerifyPair(features[m.image1], features[m.image2], m, intr, options);
  });
  std::vector<VerifiedPair> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

Reconstruction BuildTracks(const std::vector<FeatureSet>& features,
                           const std::vector<VerifiedPair>& pairs, const CameraIntrinsics& intr) {
  Reconstruction recon;
  recon.intrinsics = intr;
  const std::size_t num_images = features.size();
  std::vector<std::size_t> offset(num_images + 1, 0);
  for (std::size_t i = 0; i < num_images; ++i) offset[i + 1] = offset[i] + features[i].size();
  recon.keypoints.resize(num_images);
  recon.keypoint_track.resize(num_images);
  recon.frame_indices.resize(num_images);
  recon.image_names.resize(num_images);
  for (std::size_t i = 0; i < num_images; ++i) {
    recon.frame_indices[i] = static_cast<int>(i);
    for (const auto& kp : features[i].keypoints) recon.keypoints[i].push_back(ToVec(kp));
    recon.keypoint_track[i].assign(features[i].size(), -1);
  }

  std::vector<std::size_t> parent(offset.back());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::vector<bool> used(offset.back(), false);
  for (const auto& pair : pairs) {
    for (const auto& m : pair.inliers) {
      const std::size_t a = offset[pair.image1] + m.index1;
      const std::size_t b = offset[pair.image2] + m.index2;
      used[a] = used[b] = true;
      const std::size_t ra = find(a);
      const std::size_t rb = find(b);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
  }

  // Nodes are visited in increasing order, so each root is the smallest
  // member and tracks come out sorted by their first observation.
  std::map<std::size_t, std::vector<Observation>> groups;
  for (std::size_t image = 0; image < num_images; ++image) {
    for (std::size_t k = 0; k < features[image].size(); ++k) {
      const std::size_t node = offset[image] + k;
      if (!used[node]) continue;
      groups[find(node)].push_back({static_cast<int>(image), static_cast<int>(k)});
    }
  }
  for (auto& [root, obs] : groups) {
    std::vector<Observation> kept;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const bool duplicate =
          (i > 0 && obs[i - 1].image == obs[i].image) ||
          (i + 1 < obs.size() && obs[i + 1].image == obs[i].image);
      if (!duplicate) kept.push_back(obs[i]);
    }
    if (kept.size() < 2) continue;
    const int id = static_cast<int>(recon.tracks.size());
    for (const auto& o : kept) recon.keypoint_track[o.image][o.keypoint] = id;
    recon.tracks.push_back(Track{std::move(kept), std::nullopt, std::nullopt});
  }
  return recon;
}

namespace {

void ResetRegistration(Reconstruction& recon) {
  recon.frames.clear();
  for (auto& t : recon.tracks) {
    t.point3d.reset();
    t.color.reset();
  }
}

}  // namespace

void InitializeFromPairs(Reconstruction& recon, const std::vector<VerifiedPair>& pairs,
                         const SfmOptions& options, const std::vector<Image>* images) {
  std::vector<std::size_t> order;
  std::size_t best_any = pairs.size();
  double best_any_score = -1.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double score = static_cast<double>(pairs[i].inliers.size()) * pairs[i].median_angle_deg;
    if (score > best_any_score) {
      best_any_score = score;
      best_any = i;
    }
    if (static_cast<int>(pairs[i].inliers.size()) >= options.init_min_inliers &&
        pairs[i].median_angle_deg >= options.init_min_median_angle_deg) {
      order.push_back(i);
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return static_cast<double>(pairs[a].inliers.size()) * pairs[a].median_angle_deg >
           static_cast<double>(pairs[b].inliers.size()) * pairs[b].median_angle_deg;
  });
  if (order.size() > static_cast<std::size_t>(options.init_max_attempts)) {
    order.resize(static_cast<std::size_t>(options.init_max_attempts));
  }

  for (const std::size_t idx : order) {
    const auto& pair = pairs[idx];
    ResetRegistration(recon);
    recon.frames[pair.image1] = RigidPose{};
    recon.frames[pair.image2] = pair.relative;
    recon.init_first = pair.image1;
    recon.init_second = pair.image2;
    Eigen::Index axis = 0;
    pair.relative.translation.cwiseAbs().maxCoeff(&axis);
    recon.gauge_axis = static_cast<int>(axis);
    TriangulateTracks(recon, options, images);
    if (static_cast<int>(recon.NumPoints()) < options.init_min_points) continue;
    GlobalBundleAdjust(recon, options);
    if (static_cast<int>(recon.NumPoints()) >= options.init_min_points) return;
  }
  ResetRegistration(recon);
  recon.init_first = recon.init_second = -1;
  std::string message = "no image pair qualifies for initialization";
  if (best_any < pairs.size()) {
    const auto& p = pairs[best_any];
    message += "; best pair (" + std::to_string(p.image1) + ", " + std::to_string(p.image2) +
               ") has " + std::to_string(p.inliers.size()) + " inliers, median angle " +
               std::to_string(p.median_angle_deg) + " deg";
  } else {
    message += "; no pair passed geometric verification";
  }
  throw Error(ErrorKind::kInitializationFailure, message);
}

Reconstruction InitializePair(const std::vector<MatchSet>& matches,
                              const std::vector<FeatureSet>& features,
                              const CameraIntrinsics& intr, const SfmOptions& options,
                              const std::vector<Image>* images) {
  const auto pairs = VerifyAllPairs(features, matches, intr, options);
  Reconstruction recon = BuildTracks(features, pairs, intr);
  InitializeFromPairs(recon, pairs, options, images);
  return recon;
}

RigidPose RefinePose(const CameraIntrinsics& intr, const RigidPose& initial,
                     const std::vector<Vec2>& pixels, const std::vector<Vec3>& points,
                     const std::vector<bool>& use, double huber_delta) {
  auto cost_of = [&](const RigidPose& pose) {
    double cost = 0.0;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      if (!use[i]) continue;
      const Vec3 pc = pose.Apply(points[i]);
      const auto px = pc.z() > 0.0 ? TryProject(intr, pc) : std::nullopt;
      if (!px) return std::numeric_limits<double>::infinity();
      cost += HuberCost((*px - pixels[i]).squaredNorm(), huber_delta);
    }
    return cost;
  };
  RigidPose pose = initial;
  double cost = cost_of(pose);
  if (!std::isfinite(cost)) return pose;
  double lambda = 1e-3;
  for (int iter = 0; iter < 50 && cost > 0.0; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      if (!use[i]) continue;
      const auto lin = LinearizeObservation(intr, pose, points[i], pixels[i]);
      const double s = lin.residual.squaredNorm();
      const double w = s <= huber_delta * huber_delta ? 1.0 : huber_delta / std::sqrt(s);
      h += w * lin.d_pose.transpose() * lin.d_pose;
      g += w * lin.d_pose.transpose() * lin.residual;
    }
    bool accepted = false;
    while (!accepted && lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> damped = h;
      for (int k = 0; k < 6; ++k) damped(k, k) += lambda * std::max(h(k, k), 1e-9);
      const Eigen::Matrix<double, 6, 1> step = damped.ldlt().solve(-g);
      const RigidPose trial = RetractPose(pose, step);
      const double trial_cost = cost_of(trial);
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        const double rel = (cost - trial_cost) / cost;
        pose = trial;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < 1e-12) return pose;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  return pose;
}

namespace {

std::vector<bool> PoseInliers(const CameraIntrinsics& intr, const RigidPose& pose,
                              const std::vector<Vec2>& pixels, const std::vector<Vec3>& points,
                              double max_reproj, std::size_t* count) {
  std::vector<bool> inliers(pixels.size(), false);
  *count = 0;
  const double thr_sq = max_reproj * max_reproj;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const Vec3 pc = pose.Apply(points[i]);
    if (!(pc.z() > 0.0)) continue;
    const auto px = TryProject(intr, pc);
    if (px && (*px - pixels[i]).squaredNorm() < thr_sq) {
      inliers[i] = true;
      ++*count;
    }
  }
  return inliers;
}

}  // namespace

std::optional<PoseEstimate> EstimateAbsolutePose(const CameraIntrinsics& intr,
                                                 const std::vector<Vec2>& pixels,
                                                 const std::vector<Vec3>& points,
                                                 const SfmOptions& options, std::uint64_t seed) {
  const std::size_t n = pixels.size();
  if (n < 3) return std::nullopt;
  std::vector<Vec3> bearings(n);
  std::vector<bool> valid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = TryUnproject(intr, pixels[i]);
    valid[i] = b.has_value();
    bearings[i] = b.value_or(Vec3::UnitZ());
  }

  std::mt19937_64 rng(seed);
  std::optional<RigidPose> best;
  std::size_t best_count = 0;
  std::size_t iterations = options.ransac_max_iterations;
  for (std::size_t iter = 0; iter < iterations; ++iter) {
    const auto sample = SampleDistinct(n, 3, rng);
    if (!valid[sample[0]] || !valid[sample[1]] || !valid[sample[2]]) continue;
    const std::array<Vec3, 3> b{bearings[sample[0]], bearings[sample[1]], bearings[sample[2]]};
    const std::array<Vec3, 3> x{points[sample[0]], points[sample[1]], points[sample[2]]};
    for (const auto& pose : SolveP3P(b, x)) {
      std::size_t count = 0;
      PoseInliers(intr, pose, pixels, points, options.max_reproj, &count);
      if (count > best_count) {
        best_count = count;
        best = pose;
        iterations = std::min(iterations,
                              RansacIterations(static_cast<double>(count) / n, 3,
                                               options.ransac_confidence,
                                               options.ransac_max_iterations));
      }
    }
  }
  if (!best) return std::nullopt;

  PoseEstimate out;
  out.pose = *best;
  out.inliers = PoseInliers(intr, out.pose, pixels, points, options.max_reproj, &out.num_inliers);
  for (int round = 0; round < 2 && out.num_inliers >= 3; ++round) {
    const RigidPose refined =
        RefinePose(intr, out.pose, pixels, points, out.inliers, options.huber_delta);
    std::size_t count = 0;
    auto inliers = PoseInliers(intr, refined, pixels, points, options.max_reproj, &count);
    if (count < out.num_inliers) break;
    out.pose = refined;
    out.inliers = std::move(inliers);
    out.num_inliers = count;
  }
  return out;
}

std::size_t CountCorrespondences(const Reconstruction& recon, int image) {
  std::size_t count = 0;
  for (const int t : recon.keypoint_track[image]) {
    if (t >= 0 && recon.tracks[t].point3d) ++count;
  }
  return count;
}

std::size_t RegisterNextImage(Reconstruction& recon, int image, const SfmOptions& options) {
  GASTRO_CHECK(image >= 0 && static_cast<std::size_t>(image) < recon.NumImages(),
               ErrorKind::kInvalidInput, "image id out of range");
  GASTRO_CHECK(!recon.IsRegistered(image), ErrorKind::kInvalidInput,
               "image " + std::to_string(image) + " is already registered");
  std::vector<Vec2> pixels;
  std::vector<Vec3> points;
  std::vector<int> keypoints;
  for (std::size_t k = 0; k < recon.keypoint_track[image].size(); ++k) {
    const int t = recon.keypoint_track[image][k];
    if (t < 0 || !recon.tracks[t].point3d) continue;
    pixels.push_back(recon.keypoints[image][k]);
    points.push_back(*recon.tracks[t].point3d);
    keypoints.push_back(static_cast<int>(k));
  }
  const std::string name = "image " + std::to_string(image);
  if (static_cast<int>(pixels.size()) < options.min_correspondences) {
    throw Error(ErrorKind::kRegistrationFailure,
                name + ": " + std::to_string(pixels.size()) + " 2D-3D correspondences");
  }
  const auto estimate = EstimateAbsolutePose(recon.intrinsics, pixels, points, options,
                                             DeriveSeed(options.seed, 1000003u + image));
  const double ratio = estimate ? static_cast<double>(estimate->num_inliers) / pixels.size() : 0.0;
  if (!estimate || ratio < options.min_inlier_ratio ||
      static_cast<int>(estimate->num_inliers) < options.min_pnp_inliers) {
    throw Error(ErrorKind::kRegistrationFailure,
                name + ": inlier ratio " + std::to_string(ratio));
  }
  recon.frames[image] = estimate->pose;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (estimate->inliers[i]) continue;
    const int t = recon.keypoint_track[image][keypoints[i]];
    auto& obs = recon.tracks[t].observations;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      if (obs[k].image == image) {
        recon.RemoveObservation(static_cast<std::size_t>(t), k);
        break;
      }
    }
  }
  return estimate->num_inliers;
}

namespace {

Rgb SampleGray(const Image& image, const Vec2& pixel) {
  const int x = std::clamp(static_cast<int>(std::lround(pixel.x())), 0, image.width - 1);
  const int y = std::clamp(static_cast<int>(std::lround(pixel.y())), 0, image.height - 1);
  const std::uint8_t v = image.at(x, y, 0);
  return {v, v, v};
}

// Gauss-Newton on the point only, a few steps from the midpoint estimate.
Vec3 PolishPoint(const Reconstruction& recon, const std::vector<Observation>& obs, Vec3 point) {
  for (int iter = 0; iter < 3; ++iter) {
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    Vec3 g = Vec3::Zero();
    for (const auto& o : obs) {
      const RigidPose& pose = recon.frames.at(o.image);
      const Vec3 pc = pose.Apply(point);
      if (!(pc.z() > 0.0) || !TryProject(recon.intrinsics, pc)) return point;
      const auto lin = LinearizeObservation(recon.intrinsics, pose, point, recon.Pixel(o));
      h += lin.d_point.transpose() * lin.d_point;
      g += lin.d_point.transpose() * lin.residual;
    }
    const Vec3 step = h.ldlt().solve(-g);
    if (!step.allFinite()) return point;
    point += step;
    if (step.norm() < 1e-12 * (1.0 + point.norm())) break;
  }
  return point;
}

enum class TriangulationOutcome { kAccepted, kPending, kDropped };

TriangulationOutcome TryTriangulate(Reconstruction& recon, std::size_t track_id,
                                    const SfmOptions& options, const std::vector<Image>* images) {
  auto& track = recon.tracks[track_id];
  const double min_angle = DegToRad(options.min_triangulation_angle_deg);
  while (true) {
    const auto obs = recon.RegisteredObservations(track);
    if (obs.size() < 2) return TriangulationOutcome::kPending;
    std::vector<Vec3> centers;
    std::vector<Vec3> dirs;
    for (const auto& o : obs) {
      const RigidPose& pose = recon.frames.at(o.image);
      const auto b = TryUnproject(recon.intrinsics, recon.Pixel(o));
      if (!b) return TriangulationOutcome::kPending;
      centers.push_back(pose.Center());
      dirs.push_back(pose.rotation.transpose() * *b);
    }
    auto midpoint = TriangulateMidpoint(centers, dirs);
    if (!midpoint) return TriangulationOutcome::kPending;
    if (MaxTriangulationAngle(centers, *midpoint) < min_angle) {
      return TriangulationOutcome::kPending;
    }
    const Vec3 point = PolishPoint(recon, obs, *midpoint);
    if (MaxTriangulationAngle(centers, point) < min_angle) return TriangulationOutcome::kPending;

    double worst = -1.0;
    std::size_t worst_index = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const Vec3 pc = recon.frames.at(obs[i].image).Apply(point);
      const auto px = pc.z() > 0.0 ? TryProject(recon.intrinsics, pc) : std::nullopt;
      const double err = px ? (*px - recon.Pixel(obs[i])).norm()
                            : std::numeric_limits<double>::infinity();
      if (err > worst) {
        worst = err;
        worst_index = i;
      }
    }
    if (worst < options.max_reproj) {
      track.point3d = point;
      if (images) track.color = SampleGray((*images)[obs.front().image], recon.Pixel(obs.front()));
      return TriangulationOutcome::kAccepted;
    }
    if (obs.size() < 3) return TriangulationOutcome::kPending;
    auto& all = track.observations;
    for (std::size_t k = 0; k < all.size(); ++k) {
      if (all[k] == obs[worst_index]) {
        recon.RemoveObservation(track_id, k);
        break;
      }
    }
  }
}

}  // namespace

std::size_t TriangulateTracks(Reconstruction& recon, const SfmOptions& options,
                              const std::vector<Image>* images, const std::set<int>* only_images) {
  std::size_t added = 0;
  for (std::size_t t = 0; t < recon.tracks.size(); ++t) {
    const auto& track = recon.tracks[t];
    if (track.point3d) continue;
    if (only_images) {
      bool touches = false;
      for (const auto& o : track.observations) touches |= only_images->count(o.image) > 0;
      if (!touches) continue;
    }
    if (TryTriangulate(recon, t, options, images) == TriangulationOutcome::kAccepted) ++added;
  }
  return added;
}

namespace {

BundleAdjustOptions BaOptions(const SfmOptions& options, int iterations) {
  BundleAdjustOptions ba;
  ba.huber_delta = options.huber_delta;
  ba.max_reproj = options.max_reproj;
  ba.max_iterations = iterations;
  ba.relative_tolerance = options.ba_relative_tolerance;
  return ba;
}

}  // namespace

BundleAdjustReport LocalBundleAdjust(Reconstruction& recon, int image, const SfmOptions& options) {
  std::map<int, std::size_t> covisible;
  for (const int t : recon.keypoint_track[image]) {
    if (t < 0 || !recon.tracks[t].point3d) continue;
    for (const auto& o : recon.tracks[t].observations) {
      if (o.image != image && recon.IsRegistered(o.image)) ++covisible[o.image];
    }
  }
  std::vector<std::pair<int, std::size_t>> ranked(covisible.begin(), covisible.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  BundleAdjustScope scope;
  scope.variable_frames.insert(image);
  for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(options.local_ba_neighbors);
       ++i) {
    scope.variable_frames.insert(ranked[i].first);
  }
  return BundleAdjust(recon, scope, BaOptions(options, options.local_ba_iterations));
}

BundleAdjustReport GlobalBundleAdjust(Reconstruction& recon, const SfmOptions& options) {
  return BundleAdjust(recon, GlobalScope(recon), BaOptions(options, options.global_ba_iterations));
}

ReconstructResult ReconstructFromFeatures(const std::vector<FeatureSet>& features,
                                          const std::vector<MatchSet>& matches,
                                          const std::vector<Image>& images,
                                          const CameraIntrinsics& intr,
                                          const SfmOptions& options) {
  GASTRO_CHECK(features.size() >= 2, ErrorKind::kInvalidInput,
               "reconstruction needs at least 2 images");
  const auto pairs = VerifyAllPairs(features, matches, intr, options);
  ReconstructResult result;
  Reconstruction& recon = result.reconstruction;
  recon = BuildTracks(features, pairs, intr);
  const std::vector<Image>* colors = images.empty() ? nullptr : &images;
  InitializeFromPairs(recon, pairs, options, colors);

  std::set<int> skipped;
  int since_global = 0;
  int progress_since_retry = 0;
  while (recon.frames.size() < recon.NumImages()) {
    int best = -1;
    std::size_t best_count = 0;
    for (int i = 0; i < static_cast<int>(recon.NumImages()); ++i) {
      if (recon.IsRegistered(i) || skipped.count(i)) continue;
      const std::size_t count = CountCorrespondences(recon, i);
      if (count > best_count) {
        best_count = count;
        best = i;
      }
    }
    if (best < 0 || static_cast<int>(best_count) < options.min_correspondences) {
      if (skipped.empty() || progress_since_retry == 0) break;
      GlobalBundleAdjust(recon, options);
      TriangulateTracks(recon, options, colors);
      since_global = 0;
      skipped.clear();
      progress_since_retry = 0;
      continue;
    }
    try {
      RegisterNextImage(recon, best, options);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kRegistrationFailure) throw;
      skipped.insert(best);
      continue;
    }
    ++progress_since_retry;
    const std::set<int> only{best};
    TriangulateTracks(recon, options, colors, &only);
    LocalBundleAdjust(recon, best, options);
    if (++since_global >= options.global_ba_interval) {
      GlobalBundleAdjust(recon, options);
      TriangulateTracks(recon, options, colors);
      since_global = 0;
      if (!skipped.empty()) {
        skipped.clear();
        progress_since_retry = 0;
      }
    }
  }
  GlobalBundleAdjust(recon, options);
  TriangulateTracks(recon, options, colors);
  PruneObservations(recon, options.max_reproj);
  result.stats = ComputeStats(recon);
  return result;
}

std::vector<FeatureSet> DetectAll(const std::vector<Image>& images, const SiftOptions& options,
                                  const FeatureCache* cache) {
  std::vector<FeatureSet> features(images.size());
  ParallelFor(0, images.size(), [&](std::size_t i) {
    features[i] = cache ? cache->Get(images[i], options) : DetectAndDescribe(images[i], options);
  });
  return features;
}

ReconstructResult Reconstruct(const std::vector<Image>& images, const CameraIntrinsics& intr,
                              const SfmOptions& options, const FeatureCache* cache) {
  GASTRO_CHECK(images.size() >= 2, ErrorKind::kInvalidInput,
               "reconstruction needs at least 2 images");
  const auto features = DetectAll(images, options.sift, cache);
  const auto matches = MatchExhaustive(features, options.match);
  return ReconstructFromFeatures(features, matches, images, intr, options);
}

std::size_t CountInvariantViolations(const Reconstruction& recon, double max_reproj) {
  std::size_t violations = 0;
  for (const auto& track : recon.tracks) {
    if (!track.point3d) continue;
    for (const auto& o : track.observations) {
      if (!recon.IsRegistered(o.image)) continue;
      const auto err = recon.ReprojectionError(track, o);
      if (!err || *err > max_reproj) ++violations;
    }
  }
  return violations;
}

}  // namespace gastro
