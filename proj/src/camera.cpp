#include "gastro/camera.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "gastro/geometry.hpp"

namespace gastro {

Eigen::Matrix<double, CameraIntrinsics::kNumParams, 1> CameraIntrinsics::Params() const {
  Eigen::Matrix<double, kNumParams, 1> p;
  p << focal_x, focal_y, principal_x, principal_y, k[0], k[1], k[2], k[3];
  return p;
}

void CameraIntrinsics::SetParams(const Eigen::Matrix<double, kNumParams, 1>& p) {
  focal_x = p[0];
  focal_y = p[1];
  principal_x = p[2];
  principal_y = p[3];
  for (int i = 0; i < 4; ++i) k[i] = p[4 + i];
}

void CameraIntrinsics::Validate() const {
  GASTRO_CHECK(focal_x > 0.0 && focal_y > 0.0, ErrorKind::kInvalidInput,
               "focal lengths must be positive");
  GASTRO_CHECK(width > 0 && height > 0, ErrorKind::kInvalidInput,
               "image size must be positive");
  GASTRO_CHECK(principal_x >= 0.0 && principal_x < width && principal_y >= 0.0 &&
                   principal_y < height,
               ErrorKind::kInvalidInput, "principal point outside the image");
}

bool RigidPose::IsValid(double tol) const {
  const Mat3 gram = rotation.transpose() * rotation;
  return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
         std::abs(rotation.determinant() - 1.0) < tol && translation.allFinite();
}

double RadialDistortion(const CameraIntrinsics& intr, double theta) {
  const double t2 = theta * theta;
  return theta *
         (1.0 + t2 * (intr.k[0] + t2 * (intr.k[1] + t2 * (intr.k[2] + t2 * intr.k[3]))));
}

double RadialDistortionDerivative(const CameraIntrinsics& intr, double theta) {
  const double t2 = theta * theta;
  return 1.0 +
         t2 * (3.0 * intr.k[0] + t2 * (5.0 * intr.k[1] + t2 * (7.0 * intr.k[2] + t2 * 9.0 * intr.k[3])));
}

namespace {

enum class ProjectStatus { kOk, kZero, kOutOfModel };

ProjectStatus ProjectImpl(const CameraIntrinsics& intr, const Vec3& p, Vec2* pixel) {
  const double rho = std::hypot(p.x(), p.y());
  if (rho == 0.0 && p.z() == 0.0) return ProjectStatus::kZero;
  const double theta = std::atan2(rho, p.z());
  if (!(theta < kMaxIncidence)) return ProjectStatus::kOutOfModel;
  if (rho == 0.0) {
    *pixel = Vec2(intr.principal_x, intr.principal_y);
    return ProjectStatus::kOk;
  }
  const double r = RadialDistortion(intr, theta);
  *pixel = Vec2(intr.principal_x + intr.focal_x * r * p.x() / rho,
                intr.principal_y + intr.focal_y * r * p.y() / rho);
  return ProjectStatus::kOk;
}

}  // namespace

Vec2 Project(const CameraIntrinsics& intr, const Vec3& point) {
  Vec2 pixel;
  switch (ProjectImpl(intr, point, &pixel)) {
    case ProjectStatus::kZero:
      throw Error(ErrorKind::kInvalidInput, "cannot project the zero vector");
    case ProjectStatus::kOutOfModel:
      throw Error(ErrorKind::kOutOfModel, "incidence angle beyond the fisheye model");
    case ProjectStatus::kOk:
      break;
  }
  return pixel;
}

std::optional<Vec2> TryProject(const CameraIntrinsics& intr, const Vec3& point) {
  Vec2 pixel;
  if (ProjectImpl(intr, point, &pixel) != ProjectStatus::kOk) return std::nullopt;
  return pixel;
}

ProjectionJacobians ProjectWithJacobians(const CameraIntrinsics& intr, const Vec3& p) {
  ProjectionJacobians out;
  out.pixel = Project(intr, p);
  const double px = p.x();
  const double py = p.y();
  const double pz = p.z();
  const double rho2 = px * px + py * py;
  const double rho = std::sqrt(rho2);
  out.d_intrinsics.setZero();
  out.d_intrinsics(0, 2) = 1.0;
  out.d_intrinsics(1, 3) = 1.0;

  // Near the optical axis the model reduces to a pinhole with f / z scaling.
  if (rho < 1e-9 * std::abs(pz)) {
    out.d_point << intr.focal_x / pz, 0.0, -intr.focal_x * px / (pz * pz), 0.0,
        intr.focal_y / pz, -intr.focal_y * py / (pz * pz);
    out.d_intrinsics(0, 0) = px / pz;
    out.d_intrinsics(1, 1) = py / pz;
    return out;
  }

  const double theta = std::atan2(rho, pz);
  const double r = RadialDistortion(intr, theta);
  const double dr = RadialDistortionDerivative(intr, theta);
  const double denom = rho2 + pz * pz;
  const double dtheta_drho = pz / denom;
  const double dtheta_dz = -rho / denom;
  const double g = r / rho;
  const double dg_drho = (dr * dtheta_drho * rho - r) / rho2;
  const double dg_dz = dr * dtheta_dz / rho;
  const double drho_dx = px / rho;
  const double drho_dy = py / rho;

  out.d_point(0, 0) = intr.focal_x * (g + px * dg_drho * drho_dx);
  out.d_point(0, 1) = intr.focal_x * px * dg_drho * drho_dy;
  out.d_point(0, 2) = intr.focal_x * px * dg_dz;
  out.d_point(1, 0) = intr.focal_y * py * dg_drho * drho_dx;
  out.d_point(1, 1) = intr.focal_y * (g + py * dg_drho * drho_dy);
  out.d_point(1, 2) = intr.focal_y * py * dg_dz;

  out.d_intrinsics(0, 0) = g * px;
  out.d_intrinsics(1, 1) = g * py;
  double theta_pow = theta * theta * theta;
  for (int i = 0; i < 4; ++i) {
    out.d_intrinsics(0, 4 + i) = intr.focal_x * drho_dx * theta_pow;
    out.d_intrinsics(1, 4 + i) = intr.focal_y * drho_dy * theta_pow;
    theta_pow *= theta * theta;
  }
  return out;
}

namespace {

enum class UnprojectStatus { kOk, kNoConvergence, kOutOfModel, kInvalid };

UnprojectStatus UnprojectImpl(const CameraIntrinsics& intr, const Vec2& pixel, Vec3* bearing) {
  if (!pixel.allFinite()) return UnprojectStatus::kInvalid;
  const double x = (pixel.x() - intr.principal_x) / intr.focal_x;
  const double y = (pixel.y() - intr.principal_y) / intr.focal_y;
  const double r_obs = std::hypot(x, y);
  if (r_obs == 0.0) {
    *bearing = Vec3(0.0, 0.0, 1.0);
    return UnprojectStatus::kOk;
  }
  double theta = r_obs;
  bool converged = false;
  for (int iter = 0; iter < 50; ++iter) {
    const double f = RadialDistortion(intr, theta) - r_obs;
    const double df = RadialDistortionDerivative(intr, theta);
    if (!(df > 0.0)) break;
    const double step = f / df;
    theta -= step;
    if (!std::isfinite(theta)) break;
    if (std::abs(step) < 1e-15 * std::max(1.0, theta)) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    // Accept a solution already at machine precision.
    if (!(std::isfinite(theta) &&
          std::abs(RadialDistortion(intr, theta) - r_obs) < 1e-13 * std::max(1.0, r_obs))) {
      return UnprojectStatus::kNoConvergence;
    }
  }
  if (!(theta >= 0.0)) return UnprojectStatus::kNoConvergence;
  if (!(theta < kMaxIncidence)) return UnprojectStatus::kOutOfModel;
  const double s = std::sin(theta) / r_obs;
  *bearing = Vec3(x * s, y * s, std::cos(theta));
  return UnprojectStatus::kOk;
}

}  // namespace

Vec3 Unproject(const CameraIntrinsics& intr, const Vec2& pixel) {
  Vec3 bearing;
  switch (UnprojectImpl(intr, pixel, &bearing)) {
    case UnprojectStatus::kInvalid:
      throw Error(ErrorKind::kInvalidInput, "pixel is not finite");
    case UnprojectStatus::kNoConvergence:
      throw Error(ErrorKind::kNumerical, "radial inversion did not converge");
    case UnprojectStatus::kOutOfModel:
      throw Error(ErrorKind::kOutOfModel, "pixel maps beyond the fisheye model");
    case UnprojectStatus::kOk:
      break;
  }
  return bearing;
}

std::optional<Vec3> TryUnproject(const CameraIntrinsics& intr, const Vec2& pixel) {
  Vec3 bearing;
  if (UnprojectImpl(intr, pixel, &bearing) != UnprojectStatus::kOk) return std::nullopt;
  return bearing;
}

// ---------------------------------------------------------------------------
// Calibration

namespace {

constexpr int kPoseDof = 6;

double Median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

// Pose from a homography H ~ [r1 r2 t] mapping board (x, y, 1) to camera rays.
RigidPose PoseFromHomography(const Mat3& h, const std::vector<std::pair<Vec3, Vec2>>& corr,
                             const std::vector<Vec3>& rays) {
  const double scale = 2.0 / (h.col(0).norm() + h.col(1).norm());
  Mat3 m = h * scale;
  // Board must lie in front of the camera: rays and H * X agree in sign.
  double agreement = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const Vec3 x(corr[i].first.x(), corr[i].first.y(), 1.0);
    agreement += rays[i].dot(m * x);
  }
  if (agreement < 0.0) m = -m;
  Mat3 r;
  r.col(0) = m.col(0);
  r.col(1) = m.col(1);
  r.col(2) = m.col(0).cross(m.col(1));
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 rot = svd.matrixU() * svd.matrixV().transpose();
  if (rot.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    rot = u * svd.matrixV().transpose();
  }
  return {rot, m.col(2)};
}

RigidPose BearingHomographyPose(const CalibrationView& view, const CameraIntrinsics& intr) {
  std::vector<Vec2> board;
  std::vector<Vec3> rays;
  for (const auto& [bp, ip] : view.correspondences) {
    board.emplace_back(bp.x(), bp.y());
    rays.push_back(Unproject(intr, ip));
  }
  const Mat3 h = FitHomography(board, rays);
  return PoseFromHomography(h, view.correspondences, rays);
}

std::optional<double> CalibrationCost(const std::vector<CalibrationView>& views,
                                      const CameraIntrinsics& intr,
                                      const std::vector<RigidPose>& poses) {
  double cost = 0.0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (const auto& [bp, ip] : views[v].correspondences) {
      const auto px = TryProject(intr, poses[v].Apply(bp));
      if (!px) return std::nullopt;
      cost += (*px - ip).squaredNorm();
    }
  }
  if (!std::isfinite(cost)) return std::nullopt;
  return cost;
}

CameraIntrinsics InitializeIntrinsics(const std::vector<CalibrationView>& views, int width,
                                      int height) {
  CameraIntrinsics intr;
  intr.width = width;
  intr.height = height;
  intr.principal_x = 0.5 * width;
  intr.principal_y = 0.5 * height;
  const Vec2 center(intr.principal_x, intr.principal_y);

  // Pinhole homography on the central 20% of each board, focal from the
  // orthogonality constraints with the principal point at the image center.
  std::vector<double> focal_guesses;
  std::vector<Mat3> central_h(views.size());
  std::vector<std::vector<std::size_t>> central_idx(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& corr = views[v].correspondences;
    std::vector<std::size_t> order(corr.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return (corr[a].second - center).squaredNorm() < (corr[b].second - center).squaredNorm();
    });
    const std::size_t take = std::min(
        corr.size(), std::max<std::size_t>(6, (corr.size() + 4) / 5));
    order.resize(take);
    central_idx[v] = order;
    std::vector<Vec2> board;
    std::vector<Vec3> image;
    for (std::size_t i : order) {
      board.emplace_back(corr[i].first.x(), corr[i].first.y());
      image.emplace_back(corr[i].second.x() - center.x(), corr[i].second.y() - center.y(), 1.0);
    }
    const Mat3 h = FitHomography(board, image);
    central_h[v] = h;
    const double c1_num = -(h(0, 0) * h(0, 1) + h(1, 0) * h(1, 1));
    const double c1_den = h(2, 0) * h(2, 1);
    const double c2_num = h(0, 0) * h(0, 0) + h(1, 0) * h(1, 0) - h(0, 1) * h(0, 1) -
                          h(1, 1) * h(1, 1);
    const double c2_den = h(2, 1) * h(2, 1) - h(2, 0) * h(2, 0);
    const double d1 = h.col(0).z() * h.col(0).z() + h.col(1).z() * h.col(1).z();
    // Pick the better conditioned constraint relative to the homography scale.
    const double rel1 = std::abs(c1_den) / std::max(d1, 1e-300);
    const double rel2 = std::abs(c2_den) / std::max(d1, 1e-300);
    double f2 = -1.0;
    if (rel1 >= rel2 && rel1 > 1e-6) {
      f2 = c1_num / c1_den;
    } else if (rel2 > 1e-6) {
      f2 = c2_num / c2_den;
    }
    if (f2 > 0.0 && std::isfinite(f2)) focal_guesses.push_back(std::sqrt(f2));
  }
  double focal = focal_guesses.empty() ? 0.5 * std::min(width, height) : Median(focal_guesses);
  intr.focal_x = intr.focal_y = focal;

  // Refine: pose from the central pinhole fit, then focal = median(r_obs / theta).
  std::vector<double> ratios;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& corr = views[v].correspondences;
    std::vector<std::pair<Vec3, Vec2>> central;
    std::vector<Vec3> rays;
    for (std::size_t i : central_idx[v]) {
      central.push_back(corr[i]);
      rays.emplace_back((corr[i].second.x() - center.x()) / focal,
                        (corr[i].second.y() - center.y()) / focal, 1.0);
    }
    Mat3 hn = central_h[v];
    hn.row(0) /= focal;
    hn.row(1) /= focal;
    const RigidPose pose = PoseFromHomography(hn, central, rays);
    for (const auto& [bp, ip] : corr) {
      const Vec3 pc = pose.Apply(bp);
      const double theta = std::atan2(std::hypot(pc.x(), pc.y()), pc.z());
      const double r_obs = (ip - center).norm();
      if (theta > 1e-3) ratios.push_back(r_obs / theta);
    }
  }
  if (!ratios.empty()) {
    const double refined = Median(ratios);
    if (std::isfinite(refined) && refined > 0.0) focal = refined;
  }
  intr.focal_x = intr.focal_y = focal;
  return intr;
}

}  // namespace

CalibrationLinearization LinearizeCalibration(const std::vector<CalibrationView>& views,
                                              const CameraIntrinsics& intr,
                                              const std::vector<RigidPose>& poses) {
  std::size_t rows = 0;
  for (const auto& v : views) rows += 2 * v.correspondences.size();
  const int cols = CameraIntrinsics::kNumParams + kPoseDof * static_cast<int>(views.size());
  CalibrationLinearization lin;
  lin.residuals.resize(static_cast<Eigen::Index>(rows));
  lin.jacobian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), cols);
  Eigen::Index row = 0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const int col = CameraIntrinsics::kNumParams + kPoseDof * static_cast<int>(v);
    for (const auto& [bp, ip] : views[v].correspondences) {
      const Vec3 rotated = poses[v].rotation * bp;
      const auto jac = ProjectWithJacobians(intr, rotated + poses[v].translation);
      lin.residuals.segment<2>(row) = jac.pixel - ip;
      lin.jacobian.block<2, CameraIntrinsics::kNumParams>(row, 0) = jac.d_intrinsics;
      lin.jacobian.block<2, 3>(row, col) = -jac.d_point * Skew(rotated);
      lin.jacobian.block<2, 3>(row, col + 3) = jac.d_point;
      row += 2;
    }
  }
  return lin;
}

CalibrationResult Calibrate(const std::vector<CalibrationView>& views, int width, int height,
                            const CalibrationOptions& options) {
  GASTRO_CHECK(views.size() >= 3, ErrorKind::kInsufficientData,
               "calibration needs at least 3 views, got " + std::to_string(views.size()));
  GASTRO_CHECK(width > 0 && height > 0, ErrorKind::kInvalidInput, "image size must be positive");
  for (const auto& v : views) {
    GASTRO_CHECK(v.correspondences.size() >= 6, ErrorKind::kInsufficientData,
                 "each calibration view needs at least 6 correspondences");
  }

  CalibrationResult state;
  state.intrinsics = InitializeIntrinsics(views, width, height);
  for (const auto& view : views) {
    state.poses.push_back(BearingHomographyPose(view, state.intrinsics));
  }

  std::size_t num_obs = 0;
  for (const auto& v : views) num_obs += v.correspondences.size();
  auto rms_of = [&](double cost) { return std::sqrt(cost / static_cast<double>(num_obs)); };

  auto initial_cost = CalibrationCost(views, state.intrinsics, state.poses);
  GASTRO_CHECK(initial_cost.has_value(), ErrorKind::kNumerical,
               "calibration initialization projects points outside the model");
  double cost = *initial_cost;
  double lambda = options.initial_lambda;
  double last_relative_change = std::numeric_limits<double>::infinity();
  bool converged = false;

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const auto lin = LinearizeCalibration(views, state.intrinsics, state.poses);
    const Eigen::MatrixXd hessian = lin.jacobian.transpose() * lin.jacobian;
    const Eigen::VectorXd gradient = lin.jacobian.transpose() * lin.residuals;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = hessian;
      damped.diagonal() += lambda * hessian.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd delta = damped.ldlt().solve(-gradient);
      CameraIntrinsics candidate = state.intrinsics;
      candidate.SetParams(state.intrinsics.Params() + delta.head<CameraIntrinsics::kNumParams>());
      std::vector<RigidPose> candidate_poses = state.poses;
      for (std::size_t v = 0; v < views.size(); ++v) {
        const auto seg = delta.segment<kPoseDof>(CameraIntrinsics::kNumParams + kPoseDof * v);
        candidate_poses[v].rotation = ExpSO3(seg.head<3>()) * state.poses[v].rotation;
        candidate_poses[v].translation += seg.tail<3>();
      }
      std::optional<double> new_cost;
      if (delta.allFinite() && candidate.focal_x > 0.0 && candidate.focal_y > 0.0) {
        new_cost = CalibrationCost(views, candidate, candidate_poses);
      }
      if (new_cost && *new_cost < cost) {
        last_relative_change = (cost - *new_cost) / std::max(cost, 1e-300);
        state.intrinsics = candidate;
        state.poses = std::move(candidate_poses);
        cost = *new_cost;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) break;
      }
    }
    if (!accepted) {
      // No descent direction left at working precision.
      converged = true;
      break;
    }
    if (last_relative_change < options.relative_cost_tolerance || cost == 0.0) {
      converged = true;
      break;
    }
  }
  state.iterations = iter;
  state.rms = rms_of(cost);
  if (!converged && last_relative_change > 1e-6) {
    std::ostringstream msg;
    msg << "calibration did not converge after " << iter << " iterations (rms " << state.rms
        << " px)";
    throw CalibrationDivergence(msg.str(), state);
  }
  return state;
}

Image Undistort(const Image& image, const CameraIntrinsics& intr, double target_focal) {
  intr.Validate();
  GASTRO_CHECK(target_focal > 0.0, ErrorKind::kInvalidInput, "target focal must be positive");
  Image out(image.width, image.height, image.channels, 0);
  for (int v = 0; v < out.height; ++v) {
    for (int u = 0; u < out.width; ++u) {
      const Vec3 ray((u - intr.principal_x) / target_focal,
                     (v - intr.principal_y) / target_focal, 1.0);
      const auto src = TryProject(intr, ray);
      if (!src) continue;
      for (int c = 0; c < image.channels; ++c) {
        double value;
        if (SampleBilinear(image, src->x(), src->y(), c, &value)) {
          out.at(u, v, c) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
        }
      }
    }
  }
  return out;
}

}  // namespace gastro
