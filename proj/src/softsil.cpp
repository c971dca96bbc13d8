#include "thinrecon/softsil.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace thinrecon {

RasterSettings RasterSettings::for_resolution(int res, double gamma_at_128) {
  RasterSettings s;
  const double ratio = res / 128.0;
  s.gamma = gamma_at_128 * ratio * ratio;
  return s;
}

double RasterSettings::cutoff_sq() const { return gamma * std::log(1e6); }

Projection project(const CameraIntrinsics& intr, const Pose& pose, const Eigen::Vector3d& x,
                   double near_clip) {
  const Eigen::Matrix3d r = pose.rotation();
  const Eigen::Vector3d xc = r * x + pose.tvec;
  if (!(xc.z() > near_clip)) throw std::domain_error("project: point is behind the near plane");
  const double fx = intr.fx(), fy = intr.fy();
  const double inv_z = 1.0 / xc.z();
  Projection p;
  p.uv = {fx * xc.x() * inv_z + intr.cx(), fy * xc.y() * inv_z + intr.cy()};
  p.depth = xc.z();
  Eigen::Matrix<double, 2, 3> d_cam;
  d_cam << fx * inv_z, 0.0, -fx * xc.x() * inv_z * inv_z,  //
      0.0, fy * inv_z, -fy * xc.y() * inv_z * inv_z;
  p.jacobian = d_cam * r;
  return p;
}

SoftRaster soft_coverage(const TriMesh& mesh, const CameraIntrinsics& intr_in, const Pose& pose,
                         int res, const RasterSettings& settings, const simd::KernelTable& kernels) {
  if (res <= 0) throw std::invalid_argument("soft_coverage: resolution must be positive");
  if (!(settings.gamma > 0.0) || !(settings.near_clip > 0.0)) {
    throw std::invalid_argument("soft_coverage: gamma and near_clip must be positive");
  }
  const CameraIntrinsics intr =
      intr_in.width == res && intr_in.height == res ? intr_in : intr_in.rescaled(res, res);
  const double fx = intr.fx(), fy = intr.fy(), cx = intr.cx(), cy = intr.cy();
  const Eigen::Matrix3d rot = pose.rotation();

  SoftRaster out;
  out.params = {res, 1.0 / settings.gamma, settings.cutoff_sq()};
  out.num_vertices = mesh.vertices.size();
  out.transmittance.assign(static_cast<std::size_t>(res) * res, 1.0);

  std::vector<Eigen::Vector2d> uv(mesh.vertices.size());
  std::vector<char> visible(mesh.vertices.size(), 0);
  out.jacobians.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Eigen::Vector3d xc = rot * mesh.vertices[i] + pose.tvec;
    if (!(xc.z() > settings.near_clip)) continue;
    const double inv_z = 1.0 / xc.z();
    uv[i] = {fx * xc.x() * inv_z + cx, fy * xc.y() * inv_z + cy};
    Eigen::Matrix<double, 2, 3> d_cam;
    d_cam << fx * inv_z, 0.0, -fx * xc.x() * inv_z * inv_z,  //
        0.0, fy * inv_z, -fy * xc.y() * inv_z * inv_z;
    out.jacobians[i] = d_cam * rot;
    visible[i] = 1;
  }

  const double margin = std::sqrt(out.params.cutoff_sq);
  for (const auto& face : mesh.faces) {
    if (!visible[face[0]] || !visible[face[1]] || !visible[face[2]]) continue;
    simd::TriangleSetup tri;
    double min_u = uv[face[0]].x(), max_u = min_u, min_v = uv[face[0]].y(), max_v = min_v;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector2d& p = uv[face[k]];
      tri.xy[2 * k] = p.x();
      tri.xy[2 * k + 1] = p.y();
      min_u = std::min(min_u, p.x());
      max_u = std::max(max_u, p.x());
      min_v = std::min(min_v, p.y());
      max_v = std::max(max_v, p.y());
    }
    // Pixel x covers center x + 0.5.
    const double lo_x = std::max(std::ceil(min_u - margin - 0.5), 0.0);
    const double hi_x = std::min(std::floor(max_u + margin - 0.5), res - 1.0);
    const double lo_y = std::max(std::ceil(min_v - margin - 0.5), 0.0);
    const double hi_y = std::min(std::floor(max_v + margin - 0.5), res - 1.0);
    if (!(lo_x <= hi_x) || !(lo_y <= hi_y)) continue;
    tri.x0 = static_cast<int>(lo_x);
    tri.x1 = static_cast<int>(hi_x);
    tri.y0 = static_cast<int>(lo_y);
    tri.y1 = static_cast<int>(hi_y);
    kernels.accumulate_transmittance(tri, out.params, out.transmittance.data());
    out.triangles.push_back(tri);
    out.triangle_vertices.push_back(face);
  }

  out.coverage.res = res;
  out.coverage.values.resize(out.transmittance.size());
  for (std::size_t p = 0; p < out.transmittance.size(); ++p) {
    out.coverage.values[p] = 1.0 - out.transmittance[p];
  }
  return out;
}

SoftRaster soft_coverage(const TriMesh& mesh, const View& view, int res,
                         const RasterSettings& settings, const simd::KernelTable& kernels) {
  return soft_coverage(mesh, view.intrinsics, view.pose, res, settings, kernels);
}

namespace {

void check_dims(const CoverageImage& coverage, const ImageBuffer& mask) {
  if (mask.channels != 1 || mask.width != coverage.res || mask.height != coverage.res) {
    throw std::invalid_argument("silhouette_loss: mask and coverage dimensions differ");
  }
}

}  // namespace

double silhouette_loss(const CoverageImage& coverage, const ImageBuffer& mask) {
  check_dims(coverage, mask);
  double sum = 0.0;
  for (std::size_t p = 0; p < coverage.values.size(); ++p) {
    const double diff = coverage.values[p] - mask.data[p] / 255.0;
    sum += diff * diff;
  }
  return sum / static_cast<double>(coverage.values.size());
}

std::vector<double> silhouette_loss_grad(const CoverageImage& coverage, const ImageBuffer& mask) {
  check_dims(coverage, mask);
  std::vector<double> grad(coverage.values.size());
  const double scale = 2.0 / static_cast<double>(coverage.values.size());
  for (std::size_t p = 0; p < grad.size(); ++p) {
    grad[p] = scale * (coverage.values[p] - mask.data[p] / 255.0);
  }
  return grad;
}

std::vector<Eigen::Vector3d> backward_silhouette(const SoftRaster& raster,
                                                 std::span<const double> dloss_dcoverage,
                                                 const simd::KernelTable& kernels) {
  if (dloss_dcoverage.size() != raster.transmittance.size()) {
    throw std::invalid_argument("backward_silhouette: gradient image has the wrong size");
  }
  // dS/dx_j = (1 - S) * D_j, so each triangle only needs dL/dS * (1 - S).
  std::vector<double> weight(raster.transmittance.size());
  for (std::size_t p = 0; p < weight.size(); ++p) {
    weight[p] = dloss_dcoverage[p] * raster.transmittance[p];
  }
  std::vector<Eigen::Vector3d> grads(raster.num_vertices, Eigen::Vector3d::Zero());
  for (std::size_t j = 0; j < raster.triangles.size(); ++j) {
    std::array<double, 6> g{};
    kernels.triangle_gradient(raster.triangles[j], raster.params, weight.data(), g);
    for (int k = 0; k < 3; ++k) {
      const int v = raster.triangle_vertices[j][k];
      grads[v] += raster.jacobians[v].transpose() * Eigen::Vector2d(g[2 * k], g[2 * k + 1]);
    }
  }
  return grads;
}

SdfGradients zero_gradients(const SdfField& field) {
  SdfGradients g;
  g.values.assign(field.values.size(), 0.0);
  if (field.offsets_enabled()) g.offset_params.assign(field.offset_params.size(), Eigen::Vector3d::Zero());
  return g;
}

void accumulate_sdf_grads(std::span<const Eigen::Vector3d> vertex_grads,
                          const VertexProvenance& provenance, const TetGrid& grid,
                          const SdfField& field, SdfGradients& out) {
  if (vertex_grads.size() != provenance.entries.size()) {
    throw std::invalid_argument("accumulate_sdf_grads: provenance does not match the mesh");
  }
  if (out.values.size() != field.values.size()) {
    throw std::invalid_argument("accumulate_sdf_grads: gradient buffer has the wrong size");
  }
  const bool offsets = field.offsets_enabled();
  const double half_cell = 0.5 * grid.cell_size();
  for (std::size_t i = 0; i < vertex_grads.size(); ++i) {
    const auto& e = provenance.entries[i];
    const Eigen::Vector3d& g = vertex_grads[i];
    const EdgeVertex ev = edge_vertex(field.values[e.a], field.values[e.b],
                                      vertex_position(grid, field, e.a),
                                      vertex_position(grid, field, e.b));
    out.values[e.a] += g.dot(ev.d_sa);
    out.values[e.b] += g.dot(ev.d_sb);
    if (offsets) {
      const auto dtanh = [&](int k) {
        const Eigen::Vector3d th = field.offset_params[k].array().tanh();
        return Eigen::Vector3d(half_cell * (1.0 - th.array() * th.array()));
      };
      out.offset_params[e.a] += ((1.0 - ev.t) * g).cwiseProduct(dtanh(e.a));
      out.offset_params[e.b] += (ev.t * g).cwiseProduct(dtanh(e.b));
    }
  }
}

SdfGradients accumulate_sdf_grads(std::span<const Eigen::Vector3d> vertex_grads,
                                  const VertexProvenance& provenance, const TetGrid& grid,
                                  const SdfField& field) {
  SdfGradients out = zero_gradients(field);
  accumulate_sdf_grads(vertex_grads, provenance, grid, field, out);
  return out;
}

}  // namespace thinrecon
