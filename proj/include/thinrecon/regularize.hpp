#pragma once

#include <vector>

#include <Eigen/Core>

#include "thinrecon/mesh.hpp"
#include "thinrecon/tetgrid.hpp"

namespace thinrecon {

struct RegWeights {
  double lambda_lap = 0.5;
  double lambda_sdf = 0.2;
};

struct LaplacianLoss {
  double value = 0.0;
  std::vector<Eigen::Vector3d> grad;  // per mesh vertex
};

// Uniform Laplacian energy (1/V) * sum_i |v_i - mean(N(i))|^2 over edge
// neighbors. Isolated vertices contribute nothing.
LaplacianLoss laplacian_loss(const TriMesh& mesh);

struct SdfSignLoss {
  double value = 0.0;
  std::vector<double> grad;  // per grid vertex
};

// Sign-consistency penalty: for each lattice edge whose endpoints lie on
// opposite sides of zero, BCE(sigmoid(s_i), [s_j >= 0]) + BCE(sigmoid(s_j),
// [s_i >= 0]); summed and divided by the total edge count.
SdfSignLoss sdf_sign_loss(const TetGrid& grid, const SdfField& field);

}  // namespace thinrecon
