#pragma once

#include "gastro/mesh.hpp"

namespace gastro {

struct PoissonOptions {
  int depth = 6;
  double screening = 4.0;
  double padding = 0.1;  // bounding-box margin as a fraction of its largest side
  int max_cg_iterations = 5000;
  double cg_tolerance = 1e-6;
};

struct PoissonDiagnostics {
  int cg_iterations = 0;
  double relative_residual = 0.0;
  double isovalue = 0.0;
};

// Screened Poisson reconstruction on a uniform (2^depth)^3 grid. The gradient
// of the indicator follows the normals; the output winding makes face
// normals point the same way. Marching tetrahedra extraction at the mean
// indicator value over the samples; the largest component is returned.
TriangleMesh PoissonReconstruct(const PointCloud& cloud, const PoissonOptions& options = {},
                                PoissonDiagnostics* diagnostics = nullptr);

}  // namespace gastro
