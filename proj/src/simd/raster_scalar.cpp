#include <algorithm>
#include <cmath>

#include "thinrecon/simd/raster_kernels.hpp"

namespace thinrecon::simd {

bool pixel_logit(const std::array<double, 6>& xy, double px, double py, const RasterParams& params,
                 double& logit, std::array<double, 6>* d_logit) {
  const double orient = (xy[2] - xy[0]) * (xy[5] - xy[1]) - (xy[3] - xy[1]) * (xy[4] - xy[0]);
  double best = 0.0, best_t = 0.0, best_rx = 0.0, best_ry = 0.0;
  int best_edge = -1;
  bool inside = orient != 0.0;
  for (int k = 0; k < 3; ++k) {
    const int a = 2 * k, b = 2 * ((k + 1) % 3);
    const double ex = xy[b] - xy[a], ey = xy[b + 1] - xy[a + 1];
    const double wx = px - xy[a], wy = py - xy[a + 1];
    const double ee = ex * ex + ey * ey;
    const double t = ee > 0.0 ? std::clamp((wx * ex + wy * ey) / ee, 0.0, 1.0) : 0.0;
    const double rx = wx - t * ex, ry = wy - t * ey;
    const double d2 = rx * rx + ry * ry;
    // Strict comparison keeps the lowest edge index on ties.
    if (best_edge < 0 || d2 < best) {
      best = d2;
      best_t = t;
      best_rx = rx;
      best_ry = ry;
      best_edge = k;
    }
    const double cross = ex * wy - ey * wx;
    if (orient > 0.0 ? cross < 0.0 : cross > 0.0) inside = false;
  }
  if (!inside && best > params.cutoff_sq) {
    logit = 0.0;
    if (d_logit) d_logit->fill(0.0);
    return false;
  }
  const double sign = inside ? 1.0 : -1.0;
  logit = sign * best * params.inv_gamma;
  if (d_logit) {
    d_logit->fill(0.0);
    // d(d^2)/da = -2 r (1 - t), d(d^2)/db = -2 r t for the nearest edge (a, b).
    const double c = -2.0 * sign * params.inv_gamma;
    const int a = 2 * best_edge, b = 2 * ((best_edge + 1) % 3);
    (*d_logit)[a] = c * best_rx * (1.0 - best_t);
    (*d_logit)[a + 1] = c * best_ry * (1.0 - best_t);
    (*d_logit)[b] = c * best_rx * best_t;
    (*d_logit)[b + 1] = c * best_ry * best_t;
  }
  return true;
}

namespace {

void accumulate_transmittance_scalar(const TriangleSetup& tri, const RasterParams& params,
                                     double* transmittance) {
  for (int y = tri.y0; y <= tri.y1; ++y) {
    double* row = transmittance + static_cast<std::size_t>(y) * params.res;
    for (int x = tri.x0; x <= tri.x1; ++x) {
      double logit = 0.0;
      if (!pixel_logit(tri.xy, x + 0.5, y + 0.5, params, logit, nullptr)) continue;
      row[x] *= 1.0 / (1.0 + std::exp(std::min(logit, kMaxLogit)));
    }
  }
}

void triangle_gradient_scalar(const TriangleSetup& tri, const RasterParams& params,
                              const double* weight, std::array<double, 6>& out) {
  std::array<double, 6> d_logit{};
  for (int y = tri.y0; y <= tri.y1; ++y) {
    const double* row = weight + static_cast<std::size_t>(y) * params.res;
    for (int x = tri.x0; x <= tri.x1; ++x) {
      const double w = row[x];
      if (w == 0.0) continue;
      double logit = 0.0;
      if (!pixel_logit(tri.xy, x + 0.5, y + 0.5, params, logit, &d_logit)) continue;
      const double sig = 1.0 / (1.0 + std::exp(std::min(-logit, kMaxLogit)));
      const double g = w * sig;
      for (int k = 0; k < 6; ++k) out[k] += g * d_logit[k];
    }
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", accumulate_transmittance_scalar,
                                 triangle_gradient_scalar};
  return table;
}

}  // namespace thinrecon::simd
