#include "thinrecon/regularize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace thinrecon {

LaplacianLoss laplacian_loss(const TriMesh& mesh) {
  const std::size_t nv = mesh.vertices.size();
  LaplacianLoss out;
  out.grad.assign(nv, Eigen::Vector3d::Zero());
  if (nv == 0) return out;

  // Unique undirected edges as CSR adjacency.
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(mesh.faces.size() * 6);
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k], b = f[(k + 1) % 3];
      pairs.emplace_back(a, b);
      pairs.emplace_back(b, a);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  std::vector<std::size_t> start(nv + 1, 0);
  for (const auto& [a, b] : pairs) ++start[a + 1];
  for (std::size_t i = 0; i < nv; ++i) start[i + 1] += start[i];

  std::vector<Eigen::Vector3d> delta(nv, Eigen::Vector3d::Zero());
  double sum = 0.0;
  for (std::size_t i = 0; i < nv; ++i) {
    const std::size_t degree = start[i + 1] - start[i];
    if (degree == 0) continue;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (std::size_t e = start[i]; e < start[i + 1]; ++e) centroid += mesh.vertices[pairs[e].second];
    delta[i] = mesh.vertices[i] - centroid / static_cast<double>(degree);
    sum += delta[i].squaredNorm();
  }
  const double inv_v = 1.0 / static_cast<double>(nv);
  out.value = sum * inv_v;

  // dL/dv_k = (2/V) (delta_k - sum_{i : k in N(i)} delta_i / |N(i)|)
  for (std::size_t i = 0; i < nv; ++i) {
    const std::size_t degree = start[i + 1] - start[i];
    if (degree == 0) continue;
    out.grad[i] += 2.0 * inv_v * delta[i];
    const Eigen::Vector3d spread = (2.0 * inv_v / static_cast<double>(degree)) * delta[i];
    for (std::size_t e = start[i]; e < start[i + 1]; ++e) out.grad[pairs[e].second] -= spread;
  }
  return out;
}

namespace {

constexpr double kLogitClamp = 40.0;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// -ln sigmoid(s) (target 1) or -ln(1 - sigmoid(s)) (target 0), with the
// derivative w.r.t. the unclamped s.
void bce(double s, bool target, double& value, double& grad) {
  const double c = std::clamp(s, -kLogitClamp, kLogitClamp);
  const bool clamped = c != s;
  if (target) {
    value = softplus(-c);
    grad = clamped ? 0.0 : -sigmoid(-c);
  } else {
    value = softplus(c);
    grad = clamped ? 0.0 : sigmoid(c);
  }
}

}  // namespace

SdfSignLoss sdf_sign_loss(const TetGrid& grid, const SdfField& field) {
  if (field.values.size() != grid.num_vertices()) {
    throw std::invalid_argument("sdf_sign_loss: field size does not match grid");
  }
  SdfSignLoss out;
  out.grad.assign(field.values.size(), 0.0);
  if (grid.edges.empty()) return out;
  const double inv_e = 1.0 / static_cast<double>(grid.edges.size());
  const auto& s = field.values;
  double sum = 0.0;
  for (const auto& [i, j] : grid.edges) {
    const bool pos_i = !is_inside(s[i]);
    const bool pos_j = !is_inside(s[j]);
    if (pos_i == pos_j) continue;
    double vi, gi, vj, gj;
    bce(s[i], pos_j, vi, gi);
    bce(s[j], pos_i, vj, gj);
    sum += vi + vj;
    out.grad[i] += gi * inv_e;
    out.grad[j] += gj * inv_e;
  }
  out.value = sum * inv_e;
  return out;
}

}  // namespace thinrecon
