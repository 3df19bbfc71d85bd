#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "gastro/error.hpp"
#include "gastro/image.hpp"
#include "gastro/types.hpp"

namespace gastro {

// Largest incidence angle the fisheye model accepts (115 degrees).
inline constexpr double kMaxIncidence = 115.0 * kPi / 180.0;

// Equidistant fisheye intrinsics: r(theta) = theta (1 + k1 t^2 + k2 t^4 + k3 t^6 + k4 t^8).
struct CameraIntrinsics {
  double focal_x = 1.0;
  double focal_y = 1.0;
  double principal_x = 0.0;
  double principal_y = 0.0;
  std::array<double, 4> k{0.0, 0.0, 0.0, 0.0};
  int width = 1;
  int height = 1;

  static constexpr int kNumParams = 8;

  // Packed as fx, fy, cx, cy, k1, k2, k3, k4.
  Eigen::Matrix<double, kNumParams, 1> Params() const;
  void SetParams(const Eigen::Matrix<double, kNumParams, 1>& params);

  // Throws kInvalidInput when an invariant is violated.
  void Validate() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

// World-to-camera transform x_cam = rotation * x_world + translation.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 Apply(const Vec3& world) const { return rotation * world + translation; }
  Vec3 Center() const { return -rotation.transpose() * translation; }
  RigidPose Inverse() const {
    return {rotation.transpose(), -rotation.transpose() * translation};
  }
  Quat Quaternion() const { return Quat(rotation).normalized(); }
  static RigidPose FromQuaternion(const Quat& q, const Vec3& t) {
    return {q.normalized().toRotationMatrix(), t};
  }
  bool IsValid(double tol = 1e-9) const;
};

// Radial polynomial r(theta) and its derivative.
double RadialDistortion(const CameraIntrinsics& intr, double theta);
double RadialDistortionDerivative(const CameraIntrinsics& intr, double theta);

// Projects a camera-frame point to pixels. Throws kInvalidInput for the zero
// vector and kOutOfModel when the incidence angle reaches kMaxIncidence.
Vec2 Project(const CameraIntrinsics& intr, const Vec3& point);

// Same as Project but reports failure instead of throwing.
std::optional<Vec2> TryProject(const CameraIntrinsics& intr, const Vec3& point);

struct ProjectionJacobians {
  Vec2 pixel;
  Eigen::Matrix<double, 2, 3> d_point;
  Eigen::Matrix<double, 2, CameraIntrinsics::kNumParams> d_intrinsics;
};

ProjectionJacobians ProjectWithJacobians(const CameraIntrinsics& intr,
                                         const Vec3& point);

// Unit bearing of a pixel. Newton iteration on the radial polynomial.
Vec3 Unproject(const CameraIntrinsics& intr, const Vec2& pixel);
std::optional<Vec3> TryUnproject(const CameraIntrinsics& intr, const Vec2& pixel);

struct CalibrationView {
  // (board point with z = 0, image point in pixels)
  std::vector<std::pair<Vec3, Vec2>> correspondences;
};

struct CalibrationResult {
  CameraIntrinsics intrinsics;
  std::vector<RigidPose> poses;
  double rms = 0.0;
  int iterations = 0;
};

// Thrown when the Levenberg-Marquardt loop fails to converge; carries the last iterate.
class CalibrationDivergence : public Error {
 public:
  CalibrationDivergence(const std::string& message, CalibrationResult last)
      : Error(ErrorKind::kNonConvergence, message), last_(std::move(last)) {}
  const CalibrationResult& last() const { return last_; }

 private:
  CalibrationResult last_;
};

struct CalibrationOptions {
  double initial_lambda = 1e-3;
  int max_iterations = 200;
  double relative_cost_tolerance = 1e-10;
};

CalibrationResult Calibrate(const std::vector<CalibrationView>& views, int width,
                            int height, const CalibrationOptions& options = {});

// Residuals and Jacobian of the calibration problem at the given state, in the
// parameter order [intrinsics(8), view0(rot 3, trans 3), view1, ...]. Exposed
// so the analytic derivatives can be checked against finite differences.
struct CalibrationLinearization {
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
};
CalibrationLinearization LinearizeCalibration(
    const std::vector<CalibrationView>& views, const CameraIntrinsics& intr,
    const std::vector<RigidPose>& poses);

// Resamples a fisheye image to a pinhole image with the given focal length and
// the same principal point and size. Bilinear sampling; outside pixels are 0.
Image Undistort(const Image& image, const CameraIntrinsics& intr,
                double target_focal);

}  // namespace gastro
