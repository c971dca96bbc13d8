#include <cmath>
#include <random>

#include "doctest.h"

#include "thinrecon/simd/raster_kernels.hpp"

using namespace thinrecon::simd;

namespace {

TriangleSetup random_triangle(std::mt19937_64& rng, int res, double cutoff_sq) {
  std::uniform_real_distribution<double> u(-4.0, res + 4.0), small(-3.0, 3.0);
  TriangleSetup t;
  const double cx = u(rng), cy = u(rng);
  const double scale = (rng() % 3 == 0) ? 0.3 : 4.0;  // include sub-pixel triangles
  for (int k = 0; k < 3; ++k) {
    t.xy[2 * k] = cx + scale * small(rng);
    t.xy[2 * k + 1] = cy + scale * small(rng);
  }
  const double m = std::sqrt(cutoff_sq);
  const double min_x = std::min({t.xy[0], t.xy[2], t.xy[4]}) - m, max_x = std::max({t.xy[0], t.xy[2], t.xy[4]}) + m;
  const double min_y = std::min({t.xy[1], t.xy[3], t.xy[5]}) - m, max_y = std::max({t.xy[1], t.xy[3], t.xy[5]}) + m;
  t.x0 = std::max(0, static_cast<int>(std::floor(min_x)));
  t.x1 = std::min(res - 1, static_cast<int>(std::ceil(max_x)));
  t.y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  t.y1 = std::min(res - 1, static_cast<int>(std::ceil(max_y)));
  return t;
}

}  // namespace

TEST_CASE("the scalar table is always available") {
  CHECK(scalar_kernels().name == "scalar");
  CHECK(active_kernels().accumulate_transmittance != nullptr);
}

TEST_CASE("pixel_logit clamps outside the cutoff") {
  const RasterParams p{16, 1.0, std::log(1e6)};
  const std::array<double, 6> tri{0, 0, 4, 0, 0, 4};
  double logit = 0.0;
  std::array<double, 6> d{};
  CHECK(pixel_logit(tri, 1.0, 1.0, p, logit, &d));
  CHECK(logit == doctest::Approx(1.0));  // distance 1 to both legs
  CHECK_FALSE(pixel_logit(tri, 10.0, 10.0, p, logit, &d));
  CHECK(logit == 0.0);
  for (double v : d) CHECK(v == 0.0);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* avx = avx2_kernels();
  if (avx == nullptr) {
    MESSAGE("AVX2 kernels unavailable on this CPU or build; nothing to compare");
    return;
  }
  CHECK(avx->name == "avx2");
  const KernelTable& ref = scalar_kernels();
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  for (int res : {5, 8, 13, 32}) {
    for (double gamma : {0.25, 1.0, 3.0}) {
      const RasterParams params{res, 1.0 / gamma, gamma * std::log(1e6)};
      const std::size_t n = static_cast<std::size_t>(res) * res;
      for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> t_ref(n, 1.0), t_avx(n, 1.0), weight(n);
        for (auto& x : weight) x = (rng() % 4 == 0) ? 0.0 : w(rng);
        for (int k = 0; k < 3; ++k) {
          const TriangleSetup tri = random_triangle(rng, res, params.cutoff_sq);
          ref.accumulate_transmittance(tri, params, t_ref.data());
          avx->accumulate_transmittance(tri, params, t_avx.data());
          for (std::size_t p = 0; p < n; ++p) {
            REQUIRE(std::abs(t_ref[p] - t_avx[p]) <= 1e-13);
          }
          std::array<double, 6> g_ref{}, g_avx{};
          ref.triangle_gradient(tri, params, weight.data(), g_ref);
          avx->triangle_gradient(tri, params, weight.data(), g_avx);
          for (int c = 0; c < 6; ++c) {
            REQUIRE(std::abs(g_ref[c] - g_avx[c]) <= 1e-12 * std::max(1.0, std::abs(g_ref[c])));
          }
        }
      }
    }
  }
}

TEST_CASE("avx2 kernels do not touch pixels outside the box") {
  const KernelTable* avx = avx2_kernels();
  if (avx == nullptr) return;
  const RasterParams params{16, 1.0, std::log(1e6)};
  TriangleSetup tri;
  tri.xy = {5, 5, 9, 5, 5, 9};
  tri.x0 = 3;
  tri.x1 = 9;  // width 7: one full lane group plus a masked tail
  tri.y0 = 4;
  tri.y1 = 6;
  std::vector<double> t(16 * 16, 1.0);
  avx->accumulate_transmittance(tri, params, t.data());
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const bool in_box = x >= 3 && x <= 9 && y >= 4 && y <= 6;
      if (!in_box) CHECK(t[y * 16 + x] == 1.0);
    }
  }
}
