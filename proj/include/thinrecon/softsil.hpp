#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "thinrecon/colmap_model.hpp"
#include "thinrecon/dataprep.hpp"
#include "thinrecon/image.hpp"
#include "thinrecon/mesh.hpp"
#include "thinrecon/simd/raster_kernels.hpp"
#include "thinrecon/tetgrid.hpp"

namespace thinrecon {

struct RasterSettings {
  double gamma = 1.0;       // px^2
  double near_clip = 1e-3;  // camera units

  // gamma_at_128 * (res / 128)^2 keeps the soft edge about one pixel wide.
  static RasterSettings for_resolution(int res, double gamma_at_128 = 1.0);

  // Squared distance beyond which an outside pixel's sigmoid is below 1e-6.
  double cutoff_sq() const;
};

struct Projection {
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();
  double depth = 0.0;
  Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();  // d(u,v)/d(x_world)
};

// Pinhole projection (distortion ignored). Throws std::domain_error when the
// point is not in front of the near plane.
Projection project(const CameraIntrinsics& intr, const Pose& pose, const Eigen::Vector3d& x,
                   double near_clip = RasterSettings{}.near_clip);

struct CoverageImage {
  int res = 0;
  std::vector<double> values;  // row-major, each in [0, 1]

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * res + x]; }
};

// Forward pass output plus what the backward pass needs.
struct SoftRaster {
  CoverageImage coverage;
  std::vector<double> transmittance;  // 1 - coverage, accumulated as a product
  std::vector<simd::TriangleSetup> triangles;
  std::vector<std::array<int, 3>> triangle_vertices;
  std::vector<Eigen::Matrix<double, 2, 3>> jacobians;  // per mesh vertex
  simd::RasterParams params;
  std::size_t num_vertices = 0;
};

// Soft silhouette S(p) = 1 - prod_j (1 - D_j(p)) over all projected triangles.
// Triangles with a vertex behind the near plane are skipped.
SoftRaster soft_coverage(const TriMesh& mesh, const CameraIntrinsics& intr, const Pose& pose,
                         int res, const RasterSettings& settings,
                         const simd::KernelTable& kernels = simd::active_kernels());
SoftRaster soft_coverage(const TriMesh& mesh, const View& view, int res,
                         const RasterSettings& settings,
                         const simd::KernelTable& kernels = simd::active_kernels());

// Mean over pixels of (S - M/255)^2.
double silhouette_loss(const CoverageImage& coverage, const ImageBuffer& mask);
// dL/dS for the loss above.
std::vector<double> silhouette_loss_grad(const CoverageImage& coverage, const ImageBuffer& mask);

// Per-mesh-vertex world-space gradients given dL/dS.
std::vector<Eigen::Vector3d> backward_silhouette(const SoftRaster& raster,
                                                 std::span<const double> dloss_dcoverage,
                                                 const simd::KernelTable& kernels = simd::active_kernels());

struct SdfGradients {
  std::vector<double> values;
  std::vector<Eigen::Vector3d> offset_params;  // empty unless offsets are enabled
};

SdfGradients zero_gradients(const SdfField& field);

// Pushes mesh-vertex gradients back to grid values (and offsets) through the
// zero-crossing interpolation of each vertex.
void accumulate_sdf_grads(std::span<const Eigen::Vector3d> vertex_grads,
                          const VertexProvenance& provenance, const TetGrid& grid,
                          const SdfField& field, SdfGradients& out);
SdfGradients accumulate_sdf_grads(std::span<const Eigen::Vector3d> vertex_grads,
                                  const VertexProvenance& provenance, const TetGrid& grid,
                                  const SdfField& field);

}  // namespace thinrecon
