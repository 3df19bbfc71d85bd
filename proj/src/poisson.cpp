#include "gastro/poisson.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <Eigen/Core>

#include "gastro/error.hpp"
#include "gastro/kdtree.hpp"
#include "gastro/parallel.hpp"

namespace gastro {

namespace {

// Node lattice of (n+1)^3 values over the unit cube.
struct Grid {
  int n = 0;
  double h = 0.0;

  int Side() const { return n + 1; }
  std::size_t Size() const {
    const auto s = static_cast<std::size_t>(Side());
    return s * s * s;
  }
  std::size_t Index(int i, int j, int k) const {
    const auto s = static_cast<std::size_t>(Side());
    return static_cast<std::size_t>(i) + s * (static_cast<std::size_t>(j) + s * static_cast<std::size_t>(k));
  }
};

struct Sample {
  Vec3 position;  // unit-cube coordinates
  Vec3 normal;
  double area = 0.0;
};

// Trilinear stencil of a point on a lattice whose node (i, j, k) sits at
// (i + offset) * h per axis, with node counts `dims`.
struct Stencil {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
};

Stencil TrilinearStencil(const Vec3& u, const Grid& grid, const Eigen::Vector3d& offset,
                         const std::array<int, 3>& dims) {
  std::array<int, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double x = u[a] * grid.n - offset[a];
    int i = static_cast<int>(std::floor(x));
    double f = x - i;
    if (i < 0) {
      i = 0;
      f = 0.0;
    }
    if (i > dims[a] - 2) {
      i = dims[a] - 2;
      f = 1.0;
    }
    base[a] = i;
    frac[a] = f;
  }
  Stencil s;
  int c = 0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                         (dz ? frac[2] : 1.0 - frac[2]);
        const std::size_t ii = static_cast<std::size_t>(base[0] + dx);
        const std::size_t jj = static_cast<std::size_t>(base[1] + dy);
        const std::size_t kk = static_cast<std::size_t>(base[2] + dz);
        s.index[c] = ii + static_cast<std::size_t>(dims[0]) *
                              (jj + static_cast<std::size_t>(dims[1]) * kk);
        s.weight[c] = w;
        ++c;
      }
    }
  }
  return s;
}

Stencil NodeStencil(const Vec3& u, const Grid& grid) {
  return TrilinearStencil(u, grid, Eigen::Vector3d::Zero(), {grid.Side(), grid.Side(), grid.Side()});
}

struct System {
  Grid grid;
  std::vector<Stencil> stencils;  // per sample
  std::vector<double> screening;  // per sample, already divided by h
  Eigen::VectorXd rhs;
  Eigen::VectorXd diagonal;
};

System BuildSystem(const std::vector<Sample>& samples, int depth, double alpha) {
  System sys;
  sys.grid.n = 1 << depth;
  sys.grid.h = 1.0 / sys.grid.n;
  const Grid& g = sys.grid;
  const int side = g.Side();
  const double h = g.h;
  const double inv_h3 = 1.0 / (h * h * h);

  // Staggered edge fields: axis-a edges sit at half-integer offsets along a.
  std::array<std::vector<double>, 3> field;
  std::array<std::array<int, 3>, 3> dims;
  for (int a = 0; a < 3; ++a) {
    dims[a] = {side, side, side};
    dims[a][a] = side - 1;
    field[a].assign(static_cast<std::size_t>(dims[a][0]) * dims[a][1] * dims[a][2], 0.0);
  }
  for (const auto& s : samples) {
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d offset = Eigen::Vector3d::Zero();
      offset[a] = 0.5;
      const Stencil st = TrilinearStencil(s.position, g, offset, dims[a]);
      const double value = s.normal[a] * s.area * inv_h3;
      for (int c = 0; c < 8; ++c) field[a][st.index[c]] += st.weight[c] * value;
    }
  }

  // rhs = h * G^T V, the system matrix is the graph Laplacian plus screening / h.
  sys.rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.Size()));
  for (int a = 0; a < 3; ++a) {
    const auto& d = dims[a];
    for (int k = 0; k < d[2]; ++k) {
      for (int j = 0; j < d[1]; ++j) {
        for (int i = 0; i < d[0]; ++i) {
          const double v =
              h * field[a][static_cast<std::size_t>(i) +
                           static_cast<std::size_t>(d[0]) *
                               (static_cast<std::size_t>(j) + static_cast<std::size_t>(d[1]) * k)];
          std::array<int, 3> lo{i, j, k};
          std::array<int, 3> hi = lo;
          hi[a] += 1;
          sys.rhs[static_cast<Eigen::Index>(g.Index(hi[0], hi[1], hi[2]))] += v;
          sys.rhs[static_cast<Eigen::Index>(g.Index(lo[0], lo[1], lo[2]))] -= v;
        }
      }
    }
  }

  sys.diagonal = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.Size()));
  for (int k = 0; k < side; ++k) {
    for (int j = 0; j < side; ++j) {
      for (int i = 0; i < side; ++i) {
        const int degree = (i > 0) + (i < side - 1) + (j > 0) + (j < side - 1) + (k > 0) +
                           (k < side - 1);
        sys.diagonal[static_cast<Eigen::Index>(g.Index(i, j, k))] = degree;
      }
    }
  }
  sys.stencils.reserve(samples.size());
  for (const auto& s : samples) {
    sys.stencils.push_back(NodeStencil(s.position, g));
    sys.screening.push_back(alpha * s.area / h);
    const Stencil& st = sys.stencils.back();
    for (int c = 0; c < 8; ++c) {
      sys.diagonal[static_cast<Eigen::Index>(st.index[c])] +=
          sys.screening.back() * st.weight[c] * st.weight[c];
    }
  }
  return sys;
}

void Apply(const System& sys, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
  const Grid& g = sys.grid;
  const int side = g.Side();
  ParallelFor(0, static_cast<std::size_t>(side), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    for (int j = 0; j < side; ++j) {
      for (int i = 0; i < side; ++i) {
        const std::size_t idx = g.Index(i, j, k);
        const double c = x[static_cast<Eigen::Index>(idx)];
        double acc = 0.0;
        auto edge = [&](std::size_t other) { acc += c - x[static_cast<Eigen::Index>(other)]; };
        if (i > 0) edge(g.Index(i - 1, j, k));
        if (i < side - 1) edge(g.Index(i + 1, j, k));
        if (j > 0) edge(g.Index(i, j - 1, k));
        if (j < side - 1) edge(g.Index(i, j + 1, k));
        if (k > 0) edge(g.Index(i, j, k - 1));
        if (k < side - 1) edge(g.Index(i, j, k + 1));
        y[static_cast<Eigen::Index>(idx)] = acc;
      }
    }
  });
  for (std::size_t s = 0; s < sys.stencils.size(); ++s) {
    const Stencil& st = sys.stencils[s];
    double value = 0.0;
    for (int c = 0; c < 8; ++c) value += st.weight[c] * x[static_cast<Eigen::Index>(st.index[c])];
    value *= sys.screening[s];
    for (int c = 0; c < 8; ++c) y[static_cast<Eigen::Index>(st.index[c])] += st.weight[c] * value;
  }
}

// Jacobi-preconditioned conjugate gradients, warm-started from x.
void ConjugateGradient(const System& sys, Eigen::VectorXd& x, const PoissonOptions& options,
                       PoissonDiagnostics* diag) {
  const double b_norm = sys.rhs.norm();
  if (b_norm == 0.0) {
    x.setZero();
    return;
  }
  Eigen::VectorXd ax(x.size());
  Apply(sys, x, ax);
  Eigen::VectorXd r = sys.rhs - ax;
  const Eigen::VectorXd inv_diag = sys.diagonal.cwiseInverse();
  Eigen::VectorXd z = r.cwiseProduct(inv_diag);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  double rel = r.norm() / b_norm;
  int iter = 0;
  for (; iter < options.max_cg_iterations && rel > options.cg_tolerance; ++iter) {
    Apply(sys, p, ax);
    const double alpha = rz / p.dot(ax);
    x += alpha * p;
    r -= alpha * ax;
    z = r.cwiseProduct(inv_diag);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
    rel = r.norm() / b_norm;
  }
  if (diag) {
    diag->cg_iterations += iter;
    diag->relative_residual = rel;
  }
  if (rel > options.cg_tolerance) {
    throw Error(ErrorKind::kNumerical, "conjugate gradients did not converge: relative residual " +
                                           std::to_string(rel) + " after " + std::to_string(iter) +
                                           " iterations");
  }
}

// Trilinear prolongation from a grid with n/2 cells to one with n cells.
Eigen::VectorXd Prolongate(const Eigen::VectorXd& coarse, const Grid& cg, const Grid& fg) {
  Eigen::VectorXd fine(static_cast<Eigen::Index>(fg.Size()));
  const int side = fg.Side();
  for (int k = 0; k < side; ++k) {
    for (int j = 0; j < side; ++j) {
      for (int i = 0; i < side; ++i) {
        const int ci[3] = {i / 2, j / 2, k / 2};
        const int odd[3] = {i % 2, j % 2, k % 2};
        double acc = 0.0;
        double wsum = 0.0;
        for (int dz = 0; dz <= odd[2]; ++dz) {
          for (int dy = 0; dy <= odd[1]; ++dy) {
            for (int dx = 0; dx <= odd[0]; ++dx) {
              acc += coarse[static_cast<Eigen::Index>(cg.Index(ci[0] + dx, ci[1] + dy, ci[2] + dz))];
              wsum += 1.0;
            }
          }
        }
        fine[static_cast<Eigen::Index>(fg.Index(i, j, k))] = acc / wsum;
      }
    }
  }
  return fine;
}

double Evaluate(const Stencil& st, const Eigen::VectorXd& x) {
  double v = 0.0;
  for (int c = 0; c < 8; ++c) v += st.weight[c] * x[static_cast<Eigen::Index>(st.index[c])];
  return v;
}

// Kuhn decomposition of the cube into six tetrahedra around the 0-7 diagonal.
// Corner c has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                             {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};

Vec3 CornerOffset(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

int Parity(const std::array<int, 4>& perm) {
  int inversions = 0;
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) inversions += perm[a] > perm[b];
  }
  return inversions % 2 == 0 ? 1 : -1;
}

class TetMesher {
 public:
  TetMesher(const Grid& grid, const std::vector<double>& values, double iso, const Vec3& origin,
            double scale)
      : grid_(grid), values_(values), iso_(iso), origin_(origin), scale_(scale) {
    for (int t = 0; t < 6; ++t) {
      const Vec3 a = CornerOffset(kTets[t][0]);
      const double det = (CornerOffset(kTets[t][1]) - a)
                             .cross(CornerOffset(kTets[t][2]) - a)
                             .dot(CornerOffset(kTets[t][3]) - a);
      orientation_[t] = det > 0.0 ? 1 : -1;
    }
  }

  TriangleMesh Run() {
    const int n = grid_.n;
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) Cube(i, j, k);
      }
    }
    return std::move(mesh_);
  }

 private:
  void Cube(int i, int j, int k) {
    std::array<std::size_t, 8> node{};
    int inside_mask = 0;
    for (int c = 0; c < 8; ++c) {
      node[c] = grid_.Index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
      if (values_[node[c]] > iso_) inside_mask |= 1 << c;
    }
    if (inside_mask == 0 || inside_mask == 255) return;
    for (int t = 0; t < 6; ++t) {
      std::array<std::size_t, 4> v{};
      std::array<bool, 4> in{};
      for (int a = 0; a < 4; ++a) {
        v[a] = node[kTets[t][a]];
        in[a] = (inside_mask >> kTets[t][a]) & 1;
      }
      Tet(v, in, orientation_[t]);
    }
  }

  void Tet(const std::array<std::size_t, 4>& v, const std::array<bool, 4>& in, int orientation) {
    std::array<int, 4> ins{};
    std::array<int, 4> outs{};
    int ni = 0;
    int no = 0;
    for (int a = 0; a < 4; ++a) {
      if (in[a]) {
        ins[ni++] = a;
      } else {
        outs[no++] = a;
      }
    }
    if (ni == 0 || ni == 4) return;
    auto e = [&](int a, int b) { return EdgeVertex(v[a], v[b]); };
    if (ni == 1 || ni == 3) {
      const int lone = ni == 1 ? ins[0] : outs[0];
      std::array<int, 4> perm{lone, 0, 0, 0};
      int m = 1;
      for (int a = 0; a < 4; ++a) {
        if (a != lone) perm[m++] = a;
      }
      const int s = orientation * Parity(perm);
      const int a = perm[0];
      const int b = perm[1];
      const int c = perm[2];
      const int d = perm[3];
      // Face normals point from outside (low) to inside (high) values.
      const bool lone_inside = ni == 1;
      if ((s > 0) == lone_inside) {
        Emit(e(a, b), e(a, d), e(a, c));
      } else {
        Emit(e(a, b), e(a, c), e(a, d));
      }
      return;
    }
    const std::array<int, 4> perm{ins[0], ins[1], outs[0], outs[1]};
    const int s = orientation * Parity(perm);
    const int a = perm[0];
    const int b = perm[1];
    const int c = perm[2];
    const int d = perm[3];
    if (s > 0) {
      Emit(e(a, c), e(b, c), e(b, d));
      Emit(e(a, c), e(b, d), e(a, d));
    } else {
      Emit(e(a, c), e(b, d), e(b, c));
      Emit(e(a, c), e(a, d), e(b, d));
    }
  }

  int EdgeVertex(std::size_t p, std::size_t q) {
    const std::size_t a = std::min(p, q);
    const std::size_t b = std::max(p, q);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * grid_.Size() + b;
    const auto it = edges_.find(key);
    if (it != edges_.end()) return it->second;
    const double va = values_[a];
    const double vb = values_[b];
    const double t = (iso_ - va) / (vb - va);
    const Vec3 pa = NodePosition(a);
    const Vec3 pb = NodePosition(b);
    const int id = static_cast<int>(mesh_.vertices.size());
    mesh_.vertices.push_back(origin_ + scale_ * (pa + t * (pb - pa)));
    edges_.emplace(key, id);
    return id;
  }

  Vec3 NodePosition(std::size_t idx) const {
    const auto side = static_cast<std::size_t>(grid_.Side());
    const double i = static_cast<double>(idx % side);
    const double j = static_cast<double>((idx / side) % side);
    const double k = static_cast<double>(idx / (side * side));
    return Vec3(i, j, k) * grid_.h;
  }

  void Emit(int a, int b, int c) { mesh_.triangles.push_back({a, b, c}); }

  const Grid& grid_;
  const std::vector<double>& values_;
  double iso_;
  Vec3 origin_;
  double scale_;
  std::array<int, 6> orientation_{};
  std::unordered_map<std::uint64_t, int> edges_;
  TriangleMesh mesh_;
};

}  // namespace

TriangleMesh PoissonReconstruct(const PointCloud& cloud, const PoissonOptions& options,
                                PoissonDiagnostics* diagnostics) {
  GASTRO_CHECK(options.depth >= 5 && options.depth <= 8, ErrorKind::kInvalidInput,
               "Poisson depth must lie in [5, 8]");
  GASTRO_CHECK(options.screening >= 0.0, ErrorKind::kInvalidInput,
               "screening weight must be non-negative");
  GASTRO_CHECK(cloud.HasNormals(), ErrorKind::kInvalidInput, "Poisson input needs normals");

  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.normal_valid.empty() && !cloud.normal_valid[i]) continue;
    points.push_back(cloud.points[i]);
    normals.push_back(cloud.normals[i]);
  }
  GASTRO_CHECK(points.size() >= 10, ErrorKind::kInvalidInput,
               "Poisson input needs at least 10 oriented samples");

  Vec3 lo = points.front();
  Vec3 hi = lo;
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  GASTRO_CHECK(extent > 0.0, ErrorKind::kInvalidInput, "Poisson input has zero extent");
  const double scale = extent * (1.0 + 2.0 * options.padding);
  const Vec3 origin = 0.5 * (lo + hi) - Vec3::Constant(0.5 * scale);

  // Sample area from the distance to the 8th neighbour.
  std::vector<Sample> samples(points.size());
  {
    std::vector<Vec3> unit(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) unit[i] = (points[i] - origin) / scale;
    const KdTree tree(unit);
    const std::size_t k = std::min<std::size_t>(8, points.size() - 1);
    ParallelFor(0, points.size(), [&](std::size_t i) {
      const auto nn = tree.Nearest(unit[i], k, static_cast<std::ptrdiff_t>(i));
      const double r = nn.back().first;
      samples[i] = Sample{unit[i], normals[i], kPi * r * r / static_cast<double>(k)};
    });
  }

  PoissonDiagnostics diag;
  Eigen::VectorXd chi;
  System sys;
  const int first = std::max(3, options.depth - 2);
  for (int d = first; d <= options.depth; ++d) {
    System next = BuildSystem(samples, d, options.screening);
    if (chi.size() == 0) {
      chi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(next.grid.Size()));
    } else {
      chi = Prolongate(chi, sys.grid, next.grid);
    }
    sys = std::move(next);
    ConjugateGradient(sys, chi, options, &diag);
  }

  double iso = 0.0;
  for (const auto& st : sys.stencils) iso += Evaluate(st, chi);
  iso /= static_cast<double>(sys.stencils.size());
  diag.isovalue = iso;

  // Boundary nodes take the side of their mean so the surface closes inside the box.
  const Grid& g = sys.grid;
  const int side = g.Side();
  double boundary_sum = 0.0;
  std::size_t boundary_count = 0;
  std::vector<double> values(chi.data(), chi.data() + chi.size());
  auto on_boundary = [&](int i, int j, int k) {
    return i == 0 || j == 0 || k == 0 || i == side - 1 || j == side - 1 || k == side - 1;
  };
  for (int k = 0; k < side; ++k) {
    for (int j = 0; j < side; ++j) {
      for (int i = 0; i < side; ++i) {
        if (!on_boundary(i, j, k)) continue;
        boundary_sum += values[g.Index(i, j, k)];
        ++boundary_count;
      }
    }
  }
  const double boundary_mean = boundary_sum / static_cast<double>(boundary_count);
  const auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
  const double outside = boundary_mean > iso ? *max_it + 1.0 : *min_it - 1.0;
  for (int k = 0; k < side; ++k) {
    for (int j = 0; j < side; ++j) {
      for (int i = 0; i < side; ++i) {
        if (on_boundary(i, j, k)) values[g.Index(i, j, k)] = outside;
      }
    }
  }

  TetMesher mesher(g, values, iso, origin, scale);
  TriangleMesh mesh = LargestComponent(mesher.Run());
  if (diagnostics) *diagnostics = diag;
  if (mesh.triangles.empty()) {
    throw Error(ErrorKind::kReconstructionFailure, "Poisson isosurface is empty");
  }
  return mesh;
}

}  // namespace gastro
