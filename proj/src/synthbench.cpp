#include "gastro/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/SVD>

#include "json.hpp"

#include "gastro/error.hpp"
#include "gastro/image_io.hpp"
#include "gastro/manifest.hpp"
#include "gastro/parallel.hpp"
#include "gastro/preprocess.hpp"

namespace gastro {

namespace {

std::uint64_t Mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double UnitDouble(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

double LatticeValue(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = Mix(seed);
  h = Mix(h ^ static_cast<std::uint64_t>(x));
  h = Mix(h ^ static_cast<std::uint64_t>(y));
  h = Mix(h ^ static_cast<std::uint64_t>(z));
  return UnitDouble(h);
}

double Fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Value noise in [0, 1) with quintic interpolation.
double ValueNoise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x());
  const double fy = std::floor(p.y());
  const double fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const auto iz = static_cast<std::int64_t>(fz);
  const double u = Fade(p.x() - fx);
  const double v = Fade(p.y() - fy);
  const double w = Fade(p.z() - fz);
  double c[2][2][2];
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int d = 0; d < 2; ++d) c[a][b][d] = LatticeValue(ix + a, iy + b, iz + d, seed);
    }
  }
  auto lerp = [](double x0, double x1, double t) { return x0 + (x1 - x0) * t; };
  const double x00 = lerp(c[0][0][0], c[1][0][0], u);
  const double x10 = lerp(c[0][1][0], c[1][1][0], u);
  const double x01 = lerp(c[0][0][1], c[1][0][1], u);
  const double x11 = lerp(c[0][1][1], c[1][1][1], u);
  return lerp(lerp(x00, x10, v), lerp(x01, x11, v), w);
}

double SmoothStep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

std::vector<RigidPose> LoopTrajectory(int n) {
  std::vector<RigidPose> poses;
  const Vec3 up = Vec3::UnitZ();
  for (int i = 0; i < n; ++i) {
    const double phi = 2.0 * kPi * i / n;
    const Vec3 c(0.45 * std::cos(phi), 0.3 * std::sin(phi), 0.08 * std::sin(2.0 * phi));
    const double pitch = 0.35 * std::sin(3.0 * phi);
    const Vec3 radial(std::cos(phi), std::sin(phi), 0.0);
    const Vec3 tangent(-std::sin(phi), std::cos(phi), 0.0);
    const Vec3 forward =
        (std::cos(pitch) * (0.94 * radial + 0.34 * tangent).normalized() + std::sin(pitch) * up)
            .normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    RigidPose pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -pose.rotation * c;
    poses.push_back(pose);
  }
  return poses;
}

}  // namespace

std::string ToString(TextureVariant variant) {
  return variant == TextureVariant::kHigh ? "high" : "low";
}

TextureVariant ParseTextureVariant(const std::string& name) {
  if (name == "high") return TextureVariant::kHigh;
  if (name == "low") return TextureVariant::kLow;
  throw Error(ErrorKind::kInvalidInput, "unknown texture variant '" + name + "'");
}

SyntheticScene::SyntheticScene(SceneParams params) : params_(std::move(params)) {
  const auto& p = params_;
  GASTRO_CHECK(p.radii.minCoeff() > 0.0, ErrorKind::kInvalidScene, "radii must be positive");
  GASTRO_CHECK(p.bump_amplitude >= 0.0 && p.bump_amplitude <= kMaxBumpAmplitude,
               ErrorKind::kInvalidScene, "bump amplitude must lie in [0, 0.08]");
  GASTRO_CHECK(p.bump_amplitude < p.radii.minCoeff(), ErrorKind::kInvalidScene,
               "bump amplitude must stay below the smallest radius");
  GASTRO_CHECK(p.bump_terms >= 1, ErrorKind::kInvalidScene, "bump_terms must be positive");
  GASTRO_CHECK(p.num_frames >= 2 || !p.trajectory.empty(), ErrorKind::kInvalidScene,
               "at least two frames are required");
  GASTRO_CHECK(p.light_power > 0.0, ErrorKind::kInvalidScene, "light power must be positive");
  const auto& sim = p.world_from_canonical;
  GASTRO_CHECK(sim.scale > 0.0 &&
                   (sim.rotation.transpose() * sim.rotation - Mat3::Identity()).norm() < 1e-9 &&
                   sim.rotation.determinant() > 0.0,
               ErrorKind::kInvalidScene, "invalid world similarity");

  std::uint64_t state = Mix(p.seed ^ 0x5ce1eULL);
  auto next = [&]() {
    state = Mix(state);
    return UnitDouble(state);
  };
  for (int k = 0; k < p.bump_terms; ++k) {
    const double z = 2.0 * next() - 1.0;
    const double a = 2.0 * kPi * next();
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    bump_axes_.emplace_back(s * std::cos(a), s * std::sin(a), z);
    bump_freq_.push_back(3.0 + 4.0 * next());
    bump_phase_.push_back(2.0 * kPi * next());
  }
  const double gz = 2.0 * next() - 1.0;
  const double ga = 2.0 * kPi * next();
  const double gs = std::sqrt(std::max(0.0, 1.0 - gz * gz));
  gradient_axis_ = Vec3(gs * std::cos(ga), gs * std::sin(ga), gz);

  if (p.trajectory.empty()) {
    const Mat3 rt = sim.rotation.transpose();
    for (const auto& c : LoopTrajectory(p.num_frames)) {
      RigidPose w;
      w.rotation = c.rotation * rt;
      w.translation = sim.scale * c.translation - w.rotation * sim.translation;
      trajectory_.push_back(w);
    }
  } else {
    trajectory_ = p.trajectory;
  }
  for (std::size_t i = 0; i < trajectory_.size(); ++i) {
    GASTRO_CHECK(trajectory_[i].IsValid(1e-6), ErrorKind::kInvalidScene,
                 "trajectory pose " + std::to_string(i) + " is not a rigid transform");
    GASTRO_CHECK(Inside(trajectory_[i].Center()), ErrorKind::kInvalidScene,
                 "trajectory pose " + std::to_string(i) + " lies outside the cavity");
  }
}

double SyntheticScene::Radius(const Vec3& d) const {
  const Vec3& r = params_.radii;
  const double q = d.x() * d.x() / (r.x() * r.x()) + d.y() * d.y() / (r.y() * r.y()) +
                   d.z() * d.z() / (r.z() * r.z());
  double bump = 0.0;
  for (std::size_t k = 0; k < bump_axes_.size(); ++k) {
    bump += std::sin(bump_freq_[k] * bump_axes_[k].dot(d) + bump_phase_[k]);
  }
  return 1.0 / std::sqrt(q) + params_.bump_amplitude * bump / static_cast<double>(bump_axes_.size());
}

double SyntheticScene::Implicit(const Vec3& p) const {
  const double n = p.norm();
  if (n < 1e-12) return -Radius(Vec3::UnitX());
  return n - Radius(p / n);
}

Vec3 SyntheticScene::ImplicitGradient(const Vec3& p) const {
  const double n = p.norm();
  if (n < 1e-12) return Vec3::UnitX();
  const Vec3 d = p / n;
  const Vec3& r = params_.radii;
  const Vec3 dd(d.x() / (r.x() * r.x()), d.y() / (r.y() * r.y()), d.z() / (r.z() * r.z()));
  const double q = d.dot(dd);
  Vec3 grad_r = -dd / (q * std::sqrt(q));
  const double scale = params_.bump_amplitude / static_cast<double>(bump_axes_.size());
  for (std::size_t k = 0; k < bump_axes_.size(); ++k) {
    grad_r += scale * bump_freq_[k] *
              std::cos(bump_freq_[k] * bump_axes_[k].dot(d) + bump_phase_[k]) * bump_axes_[k];
  }
  const Vec3 tangential = grad_r - d * d.dot(grad_r);
  return d - tangential / n;
}

Vec3 SyntheticScene::ToCanonical(const Vec3& world) const {
  const auto& s = params_.world_from_canonical;
  return s.rotation.transpose() * (world - s.translation) / s.scale;
}

bool SyntheticScene::Inside(const Vec3& world) const { return Implicit(ToCanonical(world)) < 0.0; }

std::optional<double> SyntheticScene::Intersect(const Vec3& origin, const Vec3& direction) const {
  const auto& sim = params_.world_from_canonical;
  const Vec3 o = ToCanonical(origin);
  const Vec3 d = sim.rotation.transpose() * direction;
  double f0 = Implicit(o);
  if (!(f0 < 0.0)) return std::nullopt;
  const double t_max = 4.0 * params_.radii.maxCoeff();
  double t0 = 0.0;
  double t1 = 0.0;
  double f1 = f0;
  while (true) {
    const double step = std::max(-0.5 * f1, 1e-3);
    t0 = t1;
    f0 = f1;
    t1 = t0 + step;
    if (t1 > t_max) return std::nullopt;
    f1 = Implicit(o + t1 * d);
    if (f1 >= 0.0) break;
  }
  // Illinois regula falsi on the bracket [t0, t1].
  int side = 0;
  for (int it = 0; it < 100 && t1 - t0 > 1e-13; ++it) {
    const double t = (t0 * f1 - t1 * f0) / (f1 - f0);
    const double f = Implicit(o + t * d);
    if (f == 0.0) {
      t0 = t1 = t;
      break;
    }
    if (f < 0.0) {
      t0 = t;
      f0 = f;
      if (side == -1) f1 *= 0.5;
      side = -1;
    } else {
      t1 = t;
      f1 = f;
      if (side == 1) f0 *= 0.5;
      side = 1;
    }
  }
  return sim.scale * 0.5 * (t0 + t1);
}

Vec3 SyntheticScene::Normal(const Vec3& world) const {
  return (params_.world_from_canonical.rotation * ImplicitGradient(ToCanonical(world))).normalized();
}

double SyntheticScene::Mottle(const Vec3& p, double frequency, int octaves) const {
  double sum = 0.0;
  double norm = 0.0;
  double amp = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * ValueNoise(p * frequency, params_.seed * 131 + static_cast<std::uint64_t>(o));
    norm += amp;
    amp *= 0.5;
    frequency *= 2.0;
  }
  return sum / norm;
}

Vec3 SyntheticScene::Albedo(const Vec3& world) const {
  const Vec3 p = ToCanonical(world);
  if (params_.texture == TextureVariant::kHigh) {
    const double blobs = SmoothStep(0.42, 0.58, Mottle(p, 9.0, 4));
    const double fine = Mottle(p + Vec3(17.3, 5.1, 9.7), 30.0, 2);
    const double v = 0.75 * blobs + 0.25 * fine;
    return {0.85 * (0.30 + 0.70 * v), 0.45 * (0.75 + 0.25 * v), 0.40 * (0.85 + 0.15 * v)};
  }
  const double g = 0.5 + 0.5 * gradient_axis_.dot(p) / params_.radii.maxCoeff();
  const double patch = SmoothStep(0.45, 0.55, Mottle(p + Vec3(3.7, 11.2, 6.4), 1.2, 2));
  const double v = 0.65 + 0.2 * g + 0.6 * patch * (SmoothStep(0.35, 0.65, Mottle(p, 9.0, 4)) - 0.5);
  return {0.85 * v, 0.45 * v, 0.40 * v};
}

Vec3 SyntheticScene::SurfacePoint(const Vec3& canonical_direction) const {
  const Vec3 d = canonical_direction.normalized();
  return params_.world_from_canonical.Apply(Radius(d) * d);
}

double SyntheticScene::DistanceToSurface(const Vec3& world) const {
  const Vec3 p = ToCanonical(world);
  Vec3 d = p.norm() > 1e-12 ? Vec3(p.normalized()) : Vec3::UnitX();
  Vec3 q = Radius(d) * d;
  double best = (p - q).norm();
  for (int it = 0; it < 30 && best > 1e-15; ++it) {
    const Vec3 n = ImplicitGradient(q).normalized();
    const Vec3 r = p - q;
    const Vec3 moved = q + (r - n * n.dot(r));
    if (moved.norm() < 1e-12) break;
    d = moved.normalized();
    const Vec3 next = Radius(d) * d;
    const double dist = (p - next).norm();
    if (!(dist < best)) break;
    best = dist;
    q = next;
  }
  return params_.world_from_canonical.scale * best;
}

double SyntheticScene::Diameter() const {
  return 2.0 * params_.radii.maxCoeff() * params_.world_from_canonical.scale;
}

std::vector<Vec3> SyntheticScene::SampleSurface(std::size_t n, std::uint64_t seed) const {
  std::vector<Vec3> out;
  out.reserve(n);
  std::uint64_t state = Mix(seed);
  for (std::size_t i = 0; i < n; ++i) {
    state = Mix(state);
    const double z = 2.0 * UnitDouble(state) - 1.0;
    state = Mix(state);
    const double a = 2.0 * kPi * UnitDouble(state);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    out.push_back(SurfacePoint(Vec3(s * std::cos(a), s * std::sin(a), z)));
  }
  return out;
}

CameraIntrinsics SyntheticIntrinsics(int width, int height) {
  CameraIntrinsics intr;
  const double f = 0.34 * width;
  intr.focal_x = f;
  intr.focal_y = f;
  intr.principal_x = 0.5 * (width - 1);
  intr.principal_y = 0.5 * (height - 1);
  intr.k = {0.02, -0.004, 0.0005, 0.0};
  intr.width = width;
  intr.height = height;
  return intr;
}

namespace {

std::vector<std::optional<Vec3>> BearingTable(const CameraIntrinsics& intr) {
  std::vector<std::optional<Vec3>> table(static_cast<std::size_t>(intr.width) * intr.height);
  ParallelFor(0, static_cast<std::size_t>(intr.height), [&](std::size_t y) {
    for (int x = 0; x < intr.width; ++x) {
      table[y * intr.width + x] =
          TryUnproject(intr, Vec2(static_cast<double>(x), static_cast<double>(y)));
    }
  });
  return table;
}

Image RenderWithTable(const SyntheticScene& scene, const CameraIntrinsics& intr,
                      const RigidPose& pose, const std::vector<std::optional<Vec3>>& table,
                      std::vector<double>* depth) {
  const Vec3 center = pose.Center();
  GASTRO_CHECK(scene.Inside(center), ErrorKind::kInvalidScene, "camera lies outside the cavity");
  Image image(intr.width, intr.height, 3);
  if (depth) depth->assign(table.size(), 0.0);
  const Mat3 rt = pose.rotation.transpose();
  const double scale = scene.params().world_from_canonical.scale;
  ParallelFor(0, static_cast<std::size_t>(intr.height), [&](std::size_t y) {
    for (int x = 0; x < intr.width; ++x) {
      const std::size_t i = y * intr.width + x;
      if (!table[i]) continue;
      const Vec3 dir = rt * *table[i];
      const auto t = scene.Intersect(center, dir);
      if (!t) continue;
      if (depth) (*depth)[i] = *t;
      const Vec3 hit = center + *t * dir;
      const double cosine = std::max(0.0, scene.Normal(hit).dot(dir));
      const double tc = *t / scale;
      const double shade = std::min(1.0, scene.params().light_power * cosine / (tc * tc));
      const Vec3 albedo = scene.Albedo(hit);
      for (int c = 0; c < 3; ++c) {
        image.at(x, static_cast<int>(y), c) =
            static_cast<std::uint8_t>(std::lround(std::clamp(255.0 * albedo[c] * shade, 0.0, 255.0)));
      }
    }
  });
  return image;
}

}  // namespace

Image RenderView(const SyntheticScene& scene, const CameraIntrinsics& intr, const RigidPose& pose,
                 std::vector<double>* depth) {
  intr.Validate();
  return RenderWithTable(scene, intr, pose, BearingTable(intr), depth);
}

RenderResult RenderViews(const SyntheticScene& scene, const CameraIntrinsics& intr,
                         bool with_depth) {
  intr.Validate();
  const auto table = BearingTable(intr);
  RenderResult out;
  out.poses = scene.trajectory();
  for (const auto& pose : out.poses) {
    std::vector<double> depth;
    out.images.push_back(RenderWithTable(scene, intr, pose, table, with_depth ? &depth : nullptr));
    if (with_depth) out.depth.push_back(std::move(depth));
  }
  return out;
}

AlignmentResult AlignSimilarity(const std::vector<Vec3>& estimated, const std::vector<Vec3>& truth) {
  GASTRO_CHECK(estimated.size() == truth.size(), ErrorKind::kInvalidInput,
               "alignment needs paired points");
  GASTRO_CHECK(estimated.size() >= 3, ErrorKind::kDegenerateConfiguration,
               "alignment needs at least 3 points");
  auto spread_ok = [](const std::vector<Vec3>& pts) {
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    const Eigen::JacobiSVD<Mat3> svd(cov);
    const Vec3 sv = svd.singularValues();
    return sv[0] > 0.0 && sv[1] > 1e-12 * sv[0];
  };
  GASTRO_CHECK(spread_ok(estimated) && spread_ok(truth), ErrorKind::kDegenerateConfiguration,
               "alignment points are collinear or coincident");
  const auto sim = EstimateSimilarity(estimated, truth);
  GASTRO_CHECK(sim.has_value(), ErrorKind::kDegenerateConfiguration,
               "similarity estimation is degenerate");
  AlignmentResult out;
  out.transform = *sim;
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sum += (sim->Apply(estimated[i]) - truth[i]).squaredNorm();
  }
  out.rmse = std::sqrt(sum / static_cast<double>(truth.size()));
  return out;
}

double TrajectoryExtent(const std::vector<RigidPose>& poses) {
  if (poses.empty()) return 0.0;
  Vec3 lo = poses.front().Center();
  Vec3 hi = lo;
  for (const auto& p : poses) {
    lo = lo.cwiseMin(p.Center());
    hi = hi.cwiseMax(p.Center());
  }
  return (hi - lo).norm();
}

EvalReport Evaluate(const Reconstruction& recon, const TriangleMesh* mesh,
                    const SyntheticScene& scene) {
  const auto& truth_poses = scene.trajectory();
  GASTRO_CHECK(recon.frames.size() >= 3, ErrorKind::kInsufficientData,
               "evaluation needs at least 3 registered frames, got " +
                   std::to_string(recon.frames.size()));
  std::vector<Vec3> est;
  std::vector<Vec3> gt;
  std::vector<std::pair<Mat3, Mat3>> rotations;
  for (const auto& [id, pose] : recon.frames) {
    const int frame = static_cast<std::size_t>(id) < recon.frame_indices.size()
                          ? recon.frame_indices[id]
                          : id;
    GASTRO_CHECK(frame >= 0 && static_cast<std::size_t>(frame) < truth_poses.size(),
                 ErrorKind::kInvalidInput,
                 "frame index " + std::to_string(frame) + " has no ground truth");
    est.push_back(pose.Center());
    gt.push_back(truth_poses[frame].Center());
    rotations.emplace_back(pose.rotation, truth_poses[frame].rotation);
  }
  const AlignmentResult align = AlignSimilarity(est, gt);
  EvalReport report;
  report.alignment = align.transform;
  report.pose_rmse = align.rmse;
  double rot_sq = 0.0;
  for (const auto& [r_est, r_true] : rotations) {
    const double angle =
        RotationAngle(align.transform.rotation * r_est.transpose(), r_true.transpose());
    rot_sq += angle * angle;
  }
  report.rot_rmse = RadToDeg(std::sqrt(rot_sq / static_cast<double>(rotations.size())));
  if (mesh && !mesh->vertices.empty()) {
    std::vector<double> sq(mesh->vertices.size());
    ParallelFor(0, mesh->vertices.size(), [&](std::size_t i) {
      const double d = scene.DistanceToSurface(align.transform.Apply(mesh->vertices[i]));
      sq[i] = d * d;
    });
    double sum = 0.0;
    for (const double v : sq) sum += v;
    report.point_to_surface_rms = std::sqrt(sum / static_cast<double>(sq.size()));
  }
  report.stats = ComputeStats(recon);
  report.registered_pct = RoundedPercent(recon.frames.size(), truth_poses.size());
  report.trajectory_extent = TrajectoryExtent(truth_poses);
  return report;
}

void WriteSceneJson(const std::filesystem::path& path, const SceneParams& p) {
  const auto& s = p.world_from_canonical;
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(s.rotation(r, c));
  }
  nlohmann::json j = {
      {"radii", {p.radii.x(), p.radii.y(), p.radii.z()}},
      {"bump_amplitude", p.bump_amplitude},
      {"bump_terms", p.bump_terms},
      {"texture", ToString(p.texture)},
      {"seed", p.seed},
      {"num_frames", p.num_frames},
      {"light_power", p.light_power},
      {"world_from_canonical",
       {{"scale", s.scale},
        {"rotation", rot},
        {"translation", {s.translation.x(), s.translation.y(), s.translation.z()}}}}};
  GASTRO_CHECK(p.trajectory.empty(), ErrorKind::kInvalidInput,
               "scenes with a custom trajectory cannot be serialized");
  std::ofstream out(path);
  GASTRO_CHECK(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

SceneParams ReadSceneJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  GASTRO_CHECK(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  SceneParams p;
  try {
    const auto j = nlohmann::json::parse(in);
    const auto& r = j.at("radii");
    p.radii = Vec3(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>());
    p.bump_amplitude = j.at("bump_amplitude").get<double>();
    p.bump_terms = j.at("bump_terms").get<int>();
    p.texture = ParseTextureVariant(j.at("texture").get<std::string>());
    p.seed = j.at("seed").get<std::uint64_t>();
    p.num_frames = j.at("num_frames").get<int>();
    p.light_power = j.at("light_power").get<double>();
    const auto& s = j.at("world_from_canonical");
    p.world_from_canonical.scale = s.at("scale").get<double>();
    const auto& rot = s.at("rotation");
    GASTRO_CHECK(rot.size() == 9, ErrorKind::kIo, "rotation needs 9 entries");
    for (int k = 0; k < 9; ++k) p.world_from_canonical.rotation(k / 3, k % 3) = rot[k].get<double>();
    const auto& t = s.at("translation");
    p.world_from_canonical.translation =
        Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
  return p;
}

void WriteSyntheticDataset(const std::filesystem::path& dir, const SyntheticScene& scene,
                           const CameraIntrinsics& intr) {
  std::filesystem::create_directories(dir / "frames");
  const RenderResult r = RenderViews(scene, intr);
  for (std::size_t i = 0; i < r.images.size(); ++i) {
    WritePng(dir / "frames" / FrameFileName(static_cast<int>(i)), r.images[i]);
  }
  WriteIntrinsicsJson(dir / "intrinsics.json", intr);
  WritePosesJson(dir / "poses.json", r.poses);
  WriteSceneJson(dir / "scene.json", scene.params());
}

}  // namespace gastro
