#include "gastro/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace gastro {

namespace {

// Hartley normalization of 2D points: zero centroid, mean distance sqrt(2).
Mat3 NormalizingTransform(std::span<const Vec2> pts) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

}  // namespace

Mat3 FitHomography(std::span<const Vec2> source, std::span<const Vec3> destination) {
  GASTRO_CHECK(source.size() == destination.size() && source.size() >= 4,
               ErrorKind::kInsufficientData, "homography needs >= 4 correspondences");
  const std::size_t n = source.size();
  const Mat3 ts = NormalizingTransform(source);

  // Destinations in front of the camera get Hartley normalization; general
  // bearings are only scaled to unit length.
  bool dehomogenize = true;
  for (const auto& d : destination) {
    if (!(d.z() > 0.2 * d.norm())) {
      dehomogenize = false;
      break;
    }
  }
  Mat3 td = Mat3::Identity();
  std::vector<Vec3> dst(n);
  if (dehomogenize) {
    std::vector<Vec2> dst2(n);
    for (std::size_t i = 0; i < n; ++i) dst2[i] = destination[i].hnormalized();
    td = NormalizingTransform(dst2);
    for (std::size_t i = 0; i < n; ++i) dst[i] = td * dst2[i].homogeneous();
  } else {
    for (std::size_t i = 0; i < n; ++i) dst[i] = destination[i].normalized();
  }

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(3 * n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 x = ts * source[i].homogeneous();
    const Vec3& d = dst[i];
    const auto r = static_cast<Eigen::Index>(3 * i);
    a.block<1, 3>(r, 3) = -d.z() * x.transpose();
    a.block<1, 3>(r, 6) = d.y() * x.transpose();
    a.block<1, 3>(r + 1, 0) = d.z() * x.transpose();
    a.block<1, 3>(r + 1, 6) = -d.x() * x.transpose();
    a.block<1, 3>(r + 2, 0) = -d.y() * x.transpose();
    a.block<1, 3>(r + 2, 3) = d.x() * x.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return td.inverse() * hn * ts;
}

std::optional<Mat3> EssentialEightPoint(std::span<const Vec3> bearings1,
                                        std::span<const Vec3> bearings2) {
  const std::size_t n = bearings1.size();
  if (n < 8 || bearings2.size() != n) return std::nullopt;
  Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::Matrix<double, 9, 1> row;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) row(3 * i + j) = bearings2[k](i) * bearings1[k](j);
    ata.noalias() += row * row.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(ata);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const Eigen::Matrix<double, 9, 1> e = eig.eigenvectors().col(0);
  Mat3 em;
  em << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  Eigen::JacobiSVD<Mat3> svd(em, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 essential =
      svd.matrixU() * Vec3(1.0, 1.0, 0.0).asDiagonal() * svd.matrixV().transpose();
  if (!essential.allFinite()) return std::nullopt;
  return essential;
}

double SampsonErrorSq(const Mat3& essential, const Vec3& b1, const Vec3& b2) {
  const Vec3 eb1 = essential * b1;
  const Vec3 etb2 = essential.transpose() * b2;
  const double residual = b2.dot(eb1);
  const Vec3 g1 = etb2 - b1 * b1.dot(etb2);
  const Vec3 g2 = eb1 - b2 * b2.dot(eb1);
  const double denom = g1.squaredNorm() + g2.squaredNorm();
  if (denom <= 0.0) return residual == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return residual * residual / denom;
}

std::array<RigidPose, 4> DecomposeEssential(const Mat3& essential) {
  Eigen::JacobiSVD<Mat3> svd(essential, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0.0) u *= -1.0;
  if (v.determinant() < 0.0) v *= -1.0;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 r1 = u * w * v.transpose();
  const Mat3 r2 = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2).normalized();
  return {RigidPose{r1, t}, RigidPose{r1, -t}, RigidPose{r2, t}, RigidPose{r2, -t}};
}

std::optional<TwoViewPoint> TriangulateTwoRays(const Vec3& c1, const Vec3& d1, const Vec3& c2,
                                               const Vec3& d2) {
  const Vec3 w0 = c1 - c2;
  const double a = d1.dot(d1);
  const double b = d1.dot(d2);
  const double c = d2.dot(d2);
  const double d = d1.dot(w0);
  const double e = d2.dot(w0);
  const double denom = a * c - b * b;
  if (denom < 1e-14 * a * c) return std::nullopt;
  TwoViewPoint out;
  out.depth1 = (b * e - c * d) / denom;
  out.depth2 = (a * e - b * d) / denom;
  out.point = 0.5 * ((c1 + out.depth1 * d1) + (c2 + out.depth2 * d2));
  return out;
}

std::optional<Vec3> TriangulateMidpoint(std::span<const Vec3> centers,
                                        std::span<const Vec3> directions) {
  if (centers.size() < 2 || centers.size() != directions.size()) return std::nullopt;
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Vec3 d = directions[i].normalized();
    const Mat3 proj = Mat3::Identity() - d * d.transpose();
    a += proj;
    b += proj * centers[i];
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
  if (eig.eigenvalues()(0) < 1e-12 * eig.eigenvalues()(2)) return std::nullopt;
  const Vec3 x = a.ldlt().solve(b);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

double MaxTriangulationAngle(std::span<const Vec3> centers, const Vec3& point) {
  double best = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Vec3 a = (point - centers[i]).normalized();
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      const Vec3 b = (point - centers[j]).normalized();
      best = std::max(best, std::atan2(a.cross(b).norm(), a.dot(b)));
    }
  }
  return best;
}

std::vector<double> SolveQuartic(double a4, double a3, double a2, double a1, double a0) {
  std::array<double, 5> c{a0, a1, a2, a3, a4};
  const double scale = std::max({std::abs(a0), std::abs(a1), std::abs(a2), std::abs(a3),
                                 std::abs(a4)});
  if (scale == 0.0) return {};
  int degree = 4;
  while (degree > 0 && std::abs(c[degree]) <= 1e-14 * scale) --degree;
  if (degree == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) companion(0, i) = -c[degree - 1 - i] / c[degree];
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  std::vector<double> roots;
  auto eval = [&](double x, double* deriv) {
    double v = 0.0;
    double dv = 0.0;
    for (int i = degree; i >= 0; --i) {
      dv = dv * x + v;
      v = v * x + c[i];
    }
    *deriv = dv;
    return v;
  };
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const auto z = es.eigenvalues()(i);
    if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 3; ++it) {
      double d;
      const double v = eval(x, &d);
      if (d == 0.0) break;
      x -= v / d;
    }
    roots.push_back(x);
  }
  return roots;
}

std::vector<RigidPose> SolveP3P(const std::array<Vec3, 3>& bearings,
                                const std::array<Vec3, 3>& world) {
  // Grunert: sides a = |P2 P3|, b = |P1 P3|, c = |P1 P2|; angles between rays
  // alpha (2,3), beta (1,3), gamma (1,2). Depths s2 = u s1, s3 = v s1.
  const Vec3 j1 = bearings[0].normalized();
  const Vec3 j2 = bearings[1].normalized();
  const Vec3 j3 = bearings[2].normalized();
  const double a2 = (world[1] - world[2]).squaredNorm();
  const double b2 = (world[0] - world[2]).squaredNorm();
  const double c2 = (world[0] - world[1]).squaredNorm();
  if (a2 < 1e-18 || b2 < 1e-18 || c2 < 1e-18) return {};
  const double cos_a = j2.dot(j3);
  const double cos_b = j1.dot(j3);
  const double cos_g = j1.dot(j2);

  const double amc = (a2 - c2) / b2;
  const double apc = (a2 + c2) / b2;
  const double bmc = (b2 - c2) / b2;
  const double bma = (b2 - a2) / b2;

  const double A4 = (amc - 1.0) * (amc - 1.0) - 4.0 * c2 / b2 * cos_a * cos_a;
  const double A3 = 4.0 * (amc * (1.0 - amc) * cos_b - (1.0 - apc) * cos_a * cos_g +
                           2.0 * c2 / b2 * cos_a * cos_a * cos_b);
  const double A2 = 2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cos_b * cos_b +
                           2.0 * bmc * cos_a * cos_a - 4.0 * apc * cos_a * cos_b * cos_g +
                           2.0 * bma * cos_g * cos_g);
  const double A1 = 4.0 * (-amc * (1.0 + amc) * cos_b + 2.0 * a2 / b2 * cos_g * cos_g * cos_b -
                           (1.0 - apc) * cos_a * cos_g);
  const double A0 = (1.0 + amc) * (1.0 + amc) - 4.0 * a2 / b2 * cos_g * cos_g;

  std::vector<RigidPose> poses;
  for (double v : SolveQuartic(A4, A3, A2, A1, A0)) {
    if (!(v > 0.0)) continue;
    const double denom = 2.0 * (cos_g - v * cos_a);
    if (std::abs(denom) < 1e-14) continue;
    const double u = ((-1.0 + amc) * v * v - 2.0 * amc * cos_b * v + 1.0 + amc) / denom;
    if (!(u > 0.0)) continue;
    const double s1_sq = c2 / (1.0 + u * u - 2.0 * u * cos_g);
    if (!(s1_sq > 0.0)) continue;
    const double s1 = std::sqrt(s1_sq);
    const std::array<Vec3, 3> cam{s1 * j1, u * s1 * j2, v * s1 * j3};
    const auto sim = EstimateSimilarity(world, cam, /*fix_scale=*/true);
    if (!sim) continue;
    poses.push_back({sim->rotation, sim->translation});
  }
  return poses;
}

std::optional<Similarity> EstimateSimilarity(std::span<const Vec3> source,
                                             std::span<const Vec3> target, bool fix_scale) {
  const std::size_t n = source.size();
  if (n < 3 || target.size() != n) return std::nullopt;
  Vec3 mu_s = Vec3::Zero();
  Vec3 mu_t = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_s += source[i];
    mu_t += target[i];
  }
  mu_s /= static_cast<double>(n);
  mu_t /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 ds = source[i] - mu_s;
    cov += (target[i] - mu_t) * ds.transpose();
    var_s += ds.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_s /= static_cast<double>(n);
  if (var_s <= 0.0) return std::nullopt;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // Collinear (or coincident) configurations leave the rotation about the
  // line undetermined.
  if (sv(1) <= 1e-10 * std::max(sv(0), 1e-300)) return std::nullopt;
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  Similarity out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.scale = fix_scale ? 1.0 : (sv.asDiagonal() * s).trace() / var_s;
  out.translation = mu_t - out.scale * out.rotation * mu_s;
  return out;
}

std::size_t RansacIterations(double inlier_ratio, int sample_size, double confidence,
                             std::size_t max_iterations) {
  if (inlier_ratio >= 1.0) return 1;
  const double good = std::pow(inlier_ratio, sample_size);
  if (good <= 0.0) return max_iterations;
  const double denom = std::log(1.0 - good);
  if (denom >= 0.0) return max_iterations;
  const double n = std::ceil(std::log(1.0 - confidence) / denom);
  if (!std::isfinite(n) || n > static_cast<double>(max_iterations)) return max_iterations;
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

std::vector<std::size_t> SampleDistinct(std::size_t n, std::size_t sample_size,
                                        std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  out.reserve(sample_size);
  while (out.size() < sample_size) {
    const std::size_t idx = static_cast<std::size_t>(rng() % n);
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
  return out;
}

}  // namespace gastro
