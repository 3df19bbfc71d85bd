#include "gastro/bundle_adjust.hpp"

#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>

namespace gastro {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

double HuberCost(double squared_norm, double delta) {
  const double d2 = delta * delta;
  if (squared_norm <= d2) return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - d2;
}

namespace {

double HuberWeight(double squared_norm, double delta) {
  if (squared_norm <= delta * delta) return 1.0;
  return delta / std::sqrt(squared_norm);
}

}  // namespace

BundleAdjustScope GlobalScope(const Reconstruction& recon, const std::set<int>& fixed) {
  BundleAdjustScope scope;
  for (const auto& [id, pose] : recon.frames) scope.variable_frames.insert(id);
  scope.fixed_frames = fixed;
  for (std::size_t t = 0; t < recon.tracks.size(); ++t) {
    if (recon.tracks[t].point3d) scope.tracks.push_back(t);
  }
  return scope;
}

ObservationLinearization LinearizeObservation(const CameraIntrinsics& intr, const RigidPose& pose,
                                              const Vec3& point, const Vec2& observed) {
  const Vec3 rotated = pose.rotation * point;
  const auto jac = ProjectWithJacobians(intr, rotated + pose.translation);
  ObservationLinearization lin;
  lin.residual = jac.pixel - observed;
  lin.d_pose.leftCols<3>() = -jac.d_point * Skew(rotated);
  lin.d_pose.rightCols<3>() = jac.d_point;
  lin.d_point = jac.d_point * pose.rotation;
  return lin;
}

RigidPose RetractPose(const RigidPose& pose, const Vec6& delta) {
  RigidPose out;
  out.rotation = ExpSO3(delta.head<3>()) * pose.rotation;
  // Re-orthonormalize to keep the rotation invariant tight over many steps.
  const Eigen::JacobiSVD<Mat3> svd(out.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.rotation = svd.matrixU() * svd.matrixV().transpose();
  out.translation = pose.translation + delta.tail<3>();
  return out;
}

namespace {

struct ProblemObservation {
  int frame = 0;       // index into Problem::poses
  int camera = -1;     // index into the variable cameras, -1 when constant
  int point = 0;       // index into Problem::points
  Vec2 pixel;
};

struct Problem {
  std::vector<int> frame_ids;
  std::vector<RigidPose> poses;
  std::vector<int> variable;                  // frame index of each variable camera
  std::vector<std::array<bool, 6>> masks;     // true = parameter held fixed
  std::vector<std::size_t> track_ids;
  std::vector<Vec3> points;
  std::vector<ProblemObservation> observations;
  std::vector<std::vector<int>> point_observations;
};

Problem BuildProblem(const Reconstruction& recon, const BundleAdjustScope& scope) {
  Problem problem;
  std::vector<std::size_t> tracks = scope.tracks;
  if (tracks.empty()) {
    for (std::size_t t = 0; t < recon.tracks.size(); ++t) {
      const auto& track = recon.tracks[t];
      if (!track.point3d) continue;
      for (const auto& o : track.observations) {
        if (scope.variable_frames.count(o.image) && recon.IsRegistered(o.image)) {
          tracks.push_back(t);
          break;
        }
      }
    }
  }

  std::map<int, int> frame_index;
  auto frame_of = [&](int id) {
    auto it = frame_index.find(id);
    if (it != frame_index.end()) return it->second;
    const int idx = static_cast<int>(problem.poses.size());
    frame_index.emplace(id, idx);
    problem.frame_ids.push_back(id);
    problem.poses.push_back(recon.frames.at(id));
    return idx;
  };
  std::map<int, int> camera_index;
  auto camera_of = [&](int id) {
    const bool variable = scope.variable_frames.count(id) && !scope.fixed_frames.count(id) &&
                          id != recon.init_first;
    if (!variable) return -1;
    auto it = camera_index.find(id);
    if (it != camera_index.end()) return it->second;
    const int idx = static_cast<int>(problem.variable.size());
    camera_index.emplace(id, idx);
    problem.variable.push_back(frame_of(id));
    std::array<bool, 6> mask{};
    if (id == recon.init_second) mask[3 + recon.gauge_axis] = true;
    problem.masks.push_back(mask);
    return idx;
  };

  for (const std::size_t t : tracks) {
    const auto& track = recon.tracks[t];
    if (!track.point3d) continue;
    std::vector<int> obs_ids;
    for (const auto& o : track.observations) {
      if (!recon.IsRegistered(o.image)) continue;
      ProblemObservation po;
      po.camera = camera_of(o.image);
      po.frame = frame_of(o.image);
      po.point = static_cast<int>(problem.points.size());
      po.pixel = recon.Pixel(o);
      obs_ids.push_back(static_cast<int>(problem.observations.size()));
      problem.observations.push_back(po);
    }
    if (obs_ids.empty()) continue;
    problem.track_ids.push_back(t);
    problem.points.push_back(*track.point3d);
    problem.point_observations.push_back(std::move(obs_ids));
  }
  return problem;
}

double EvaluateCost(const Problem& problem, const CameraIntrinsics& intr,
                    const std::vector<RigidPose>& poses, const std::vector<Vec3>& points,
                    double delta) {
  double cost = 0.0;
  for (const auto& o : problem.observations) {
    const Vec3 pc = poses[o.frame].Apply(points[o.point]);
    if (!(pc.z() > 0.0)) return std::numeric_limits<double>::infinity();
    const auto px = TryProject(intr, pc);
    if (!px) return std::numeric_limits<double>::infinity();
    cost += HuberCost((*px - o.pixel).squaredNorm(), delta);
  }
  return cost;
}

struct Linearization {
  std::vector<Mat6> hcc;
  std::vector<Vec6> gc;
  std::vector<Eigen::Matrix3d> hpp;
  std::vector<Vec3> gp;
  std::vector<Mat63> hcp;  // per observation
};

Linearization Linearize(const Problem& problem, const CameraIntrinsics& intr, double delta) {
  Linearization lin;
  lin.hcc.assign(problem.variable.size(), Mat6::Zero());
  lin.gc.assign(problem.variable.size(), Vec6::Zero());
  lin.hpp.assign(problem.points.size(), Eigen::Matrix3d::Zero());
  lin.gp.assign(problem.points.size(), Vec3::Zero());
  lin.hcp.assign(problem.observations.size(), Mat63::Zero());
  for (std::size_t i = 0; i < problem.observations.size(); ++i) {
    const auto& o = problem.observations[i];
    const auto l = LinearizeObservation(intr, problem.poses[o.frame], problem.points[o.point],
                                        o.pixel);
    const double w = HuberWeight(l.residual.squaredNorm(), delta);
    lin.hpp[o.point] += w * l.d_point.transpose() * l.d_point;
    lin.gp[o.point] += w * l.d_point.transpose() * l.residual;
    if (o.camera >= 0) {
      lin.hcc[o.camera] += w * l.d_pose.transpose() * l.d_pose;
      lin.gc[o.camera] += w * l.d_pose.transpose() * l.residual;
      lin.hcp[i] = w * l.d_pose.transpose() * l.d_point;
    }
  }
  return lin;
}

double Damped(double diag, double lambda) {
  return lambda * std::clamp(diag, 1e-6, 1e32);
}

// Solves the damped normal equations by eliminating the point blocks.
// Returns false when the reduced camera system is not positive definite.
bool SolveStep(const Problem& problem, const Linearization& lin, double lambda,
               bool optimize_points, std::vector<Vec6>* dcam, std::vector<Vec3>* dpoint) {
  const int nc = static_cast<int>(problem.variable.size());
  const int np = static_cast<int>(problem.points.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(6 * nc, 6 * nc);
  Eigen::VectorXd rhs(6 * nc);
  for (int c = 0; c < nc; ++c) {
    Mat6 block = lin.hcc[c];
    for (int k = 0; k < 6; ++k) block(k, k) += Damped(lin.hcc[c](k, k), lambda);
    s.block<6, 6>(6 * c, 6 * c) = block;
    rhs.segment<6>(6 * c) = -lin.gc[c];
  }

  std::vector<Eigen::Matrix3d> cinv(np, Eigen::Matrix3d::Zero());
  if (optimize_points) {
    for (int p = 0; p < np; ++p) {
      Eigen::Matrix3d c = lin.hpp[p];
      for (int k = 0; k < 3; ++k) c(k, k) += Damped(lin.hpp[p](k, k), lambda);
      Eigen::LDLT<Eigen::Matrix3d> ldlt(c);
      if (ldlt.info() != Eigen::Success) return false;
      cinv[p] = ldlt.solve(Eigen::Matrix3d::Identity());
      const auto& obs = problem.point_observations[p];
      for (const int a : obs) {
        const int ca = problem.observations[a].camera;
        if (ca < 0) continue;
        const Mat63 wa = lin.hcp[a] * cinv[p];
        rhs.segment<6>(6 * ca) += wa * lin.gp[p];
        for (const int b : obs) {
          const int cb = problem.observations[b].camera;
          if (cb < 0) continue;
          s.block<6, 6>(6 * ca, 6 * cb) -= wa * lin.hcp[b].transpose();
        }
      }
    }
  }

  for (int c = 0; c < nc; ++c) {
    for (int k = 0; k < 6; ++k) {
      if (!problem.masks[c][k]) continue;
      const int r = 6 * c + k;
      s.row(r).setZero();
      s.col(r).setZero();
      s(r, r) = 1.0;
      rhs[r] = 0.0;
    }
  }

  dcam->assign(nc, Vec6::Zero());
  if (nc > 0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success) return false;
    const Eigen::VectorXd x = ldlt.solve(rhs);
    if (!x.allFinite()) return false;
    for (int c = 0; c < nc; ++c) (*dcam)[c] = x.segment<6>(6 * c);
  }

  dpoint->assign(np, Vec3::Zero());
  if (optimize_points) {
    for (int p = 0; p < np; ++p) {
      Vec3 b = -lin.gp[p];
      for (const int a : problem.point_observations[p]) {
        const int ca = problem.observations[a].camera;
        if (ca >= 0) b -= lin.hcp[a].transpose() * (*dcam)[ca];
      }
      (*dpoint)[p] = cinv[p] * b;
    }
  }
  return true;
}

}  // namespace

double BundleCost(const Reconstruction& recon, const BundleAdjustScope& scope,
                  double huber_delta) {
  const Problem problem = BuildProblem(recon, scope);
  return EvaluateCost(problem, recon.intrinsics, problem.poses, problem.points, huber_delta);
}

BundleAdjustReport BundleAdjust(Reconstruction& recon, const BundleAdjustScope& scope,
                                const BundleAdjustOptions& options) {
  Problem problem = BuildProblem(recon, scope);
  BundleAdjustReport report;
  report.num_observations = problem.observations.size();
  const auto& intr = recon.intrinsics;
  const double delta = options.huber_delta;

  double cost = EvaluateCost(problem, intr, problem.poses, problem.points, delta);
  GASTRO_CHECK(std::isfinite(cost), ErrorKind::kNumerical,
               "bundle adjustment started from a non-projectable configuration");
  report.initial_cost = cost;
  report.cost_history.push_back(cost);

  double lambda = options.initial_lambda;
  report.status = BundleAdjustStatus::kMaxIterations;
  std::vector<Vec6> dcam;
  std::vector<Vec3> dpoint;
  bool relinearize = true;
  Linearization lin;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    report.iterations = iter + 1;
    if (cost == 0.0) {
      report.status = BundleAdjustStatus::kConverged;
      break;
    }
    if (relinearize) lin = Linearize(problem, intr, delta);
    relinearize = false;

    bool accepted = false;
    if (SolveStep(problem, lin, lambda, scope.optimize_points, &dcam, &dpoint)) {
      std::vector<RigidPose> poses = problem.poses;
      for (std::size_t c = 0; c < problem.variable.size(); ++c) {
        poses[problem.variable[c]] = RetractPose(poses[problem.variable[c]], dcam[c]);
      }
      std::vector<Vec3> points = problem.points;
      for (std::size_t p = 0; p < points.size(); ++p) points[p] += dpoint[p];
      const double trial = EvaluateCost(problem, intr, poses, points, delta);
      if (std::isfinite(trial) && trial < cost) {
        const double rel = (cost - trial) / cost;
        problem.poses = std::move(poses);
        problem.points = std::move(points);
        cost = trial;
        report.cost_history.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        relinearize = true;
        if (rel < options.relative_tolerance) {
          report.status = BundleAdjustStatus::kConverged;
          break;
        }
      }
    }
    if (!accepted) {
      lambda *= 10.0;
      if (lambda > 1e12) {
        report.status = BundleAdjustStatus::kStalled;
        break;
      }
    }
  }
  report.final_cost = cost;

  for (std::size_t c = 0; c < problem.variable.size(); ++c) {
    const int f = problem.variable[c];
    recon.frames[problem.frame_ids[f]] = problem.poses[f];
  }
  for (std::size_t p = 0; p < problem.points.size(); ++p) {
    recon.tracks[problem.track_ids[p]].point3d = problem.points[p];
  }
  if (options.prune) {
    report.pruned = PruneObservations(recon, options.max_reproj, &problem.track_ids);
  }
  return report;
}

std::size_t PruneObservations(Reconstruction& recon, double max_reproj,
                              const std::vector<std::size_t>* tracks) {
  std::size_t removed = 0;
  auto prune_track = [&](std::size_t t) {
    auto& track = recon.tracks[t];
    if (!track.point3d) return;
    for (std::size_t k = track.observations.size(); k-- > 0;) {
      const auto& o = track.observations[k];
      if (!recon.IsRegistered(o.image)) continue;
      const auto err = recon.ReprojectionError(track, o);
      if (!err || *err > max_reproj) {
        recon.RemoveObservation(t, k);
        ++removed;
      }
    }
    if (recon.RegisteredObservations(track).size() < 2) {
      track.point3d.reset();
      track.color.reset();
    }
  };
  if (tracks) {
    for (const std::size_t t : *tracks) prune_track(t);
  } else {
    for (std::size_t t = 0; t < recon.tracks.size(); ++t) prune_track(t);
  }
  return removed;
}

}  // namespace gastro
