#pragma once

#include <array>
#include <string_view>

namespace thinrecon::simd {

// A projected triangle in pixel coordinates together with the clipped pixel
// bounding box it may influence (inclusive).
struct TriangleSetup {
  std::array<double, 6> xy{};  // ax, ay, bx, by, cx, cy
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

struct RasterParams {
  int res = 0;             // image is res x res, pixel (x, y) centered at (x + .5, y + .5)
  double inv_gamma = 1.0;  // 1 / softness in px^2
  double cutoff_sq = 0.0;  // outside pixels farther than sqrt(cutoff_sq) contribute exactly 0
};

// Logit clamp applied before exponentiation in every kernel variant.
inline constexpr double kMaxLogit = 700.0;

// Per-pixel kernels. Triangle influence is D = sigmoid(x) with
// x = delta * d^2 / gamma, d the distance to the triangle boundary and
// delta = +1 inside, -1 outside.
struct KernelTable {
  std::string_view name;

  // transmittance[p] *= 1 - D(p) over the triangle's box.
  void (*accumulate_transmittance)(const TriangleSetup& tri, const RasterParams& params,
                                   double* transmittance);

  // out += sum_p weight[p] * D(p) * dx(p)/d(xy), for the six vertex
  // coordinates. With weight = dL/dS * (1 - S) this is dL/d(xy).
  void (*triangle_gradient)(const TriangleSetup& tri, const RasterParams& params,
                            const double* weight, std::array<double, 6>& out);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_kernels();

// Best supported variant. THINRECON_SIMD=scalar|avx2 in the environment
// overrides the choice (falls back to scalar when unsupported).
const KernelTable& active_kernels();

// Scalar reference for one pixel: signed logit x and its gradient w.r.t. the
// six vertex coordinates (zero when the pixel is clamped). Returns false when
// the pixel is outside the cutoff.
bool pixel_logit(const std::array<double, 6>& xy, double px, double py, const RasterParams& params,
                 double& logit, std::array<double, 6>* d_logit);

}  // namespace thinrecon::simd
