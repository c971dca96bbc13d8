// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>

#include "thinrecon/simd/raster_kernels.hpp"

namespace thinrecon::simd {

namespace {

// exp(x) for x in [-kMaxLogit, kMaxLogit]: 2^n * e^r with |r| <= ln2/2 and a
// degree-13 Taylor polynomial (truncation error below 1e-17 relative).
inline __m256d exp_pd(__m256d x) {
  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-kMaxLogit)), _mm256_set1_pd(kMaxLogit));
  const __m256d n =
      _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634074)),
                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125E-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212E-6), r);

  static constexpr double kInvFactorial[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
      1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,
      1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,        1.0 / 2.0,
      1.0,                1.0};
  __m256d p = _mm256_set1_pd(kInvFactorial[0]);
  for (int i = 1; i < 14; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFactorial[i]));

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_add_epi64(_mm256_cvtepi32_epi64(n32), _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

inline double hsum_ordered(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
}

struct EdgeConsts {
  __m256d ax, ay, ex, ey, ee;
  __m256d ee_positive;
};

struct PixelBatch {
  __m256d best;       // squared distance to the boundary
  __m256d t, rx, ry;  // closest-point parameters on the nearest edge
  __m256d edge;       // nearest edge index (0, 1, 2) as double
  __m256d inside;     // all-ones lanes inside the triangle
};

class TriangleLanes {
 public:
  explicit TriangleLanes(const TriangleSetup& tri) {
    const auto& xy = tri.xy;
    const double orient = (xy[2] - xy[0]) * (xy[5] - xy[1]) - (xy[3] - xy[1]) * (xy[4] - xy[0]);
    degenerate_ = orient == 0.0;
    orient_sign_ = _mm256_set1_pd(orient > 0.0 ? 1.0 : -1.0);
    for (int k = 0; k < 3; ++k) {
      const int a = 2 * k, b = 2 * ((k + 1) % 3);
      const double ex = xy[b] - xy[a], ey = xy[b + 1] - xy[a + 1];
      const double ee = ex * ex + ey * ey;
      edges_[k] = {_mm256_set1_pd(xy[a]), _mm256_set1_pd(xy[a + 1]), _mm256_set1_pd(ex),
                   _mm256_set1_pd(ey),    _mm256_set1_pd(ee),
                   ee > 0.0 ? _mm256_castsi256_pd(_mm256_set1_epi64x(-1)) : _mm256_setzero_pd()};
    }
  }

  PixelBatch evaluate(__m256d px, __m256d py) const {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    PixelBatch out{};
    __m256d outside = degenerate_ ? _mm256_castsi256_pd(_mm256_set1_epi64x(-1)) : zero;
    for (int k = 0; k < 3; ++k) {
      const EdgeConsts& e = edges_[k];
      const __m256d wx = _mm256_sub_pd(px, e.ax);
      const __m256d wy = _mm256_sub_pd(py, e.ay);
      const __m256d dot = _mm256_fmadd_pd(wx, e.ex, _mm256_mul_pd(wy, e.ey));
      __m256d t = _mm256_and_pd(_mm256_div_pd(dot, e.ee), e.ee_positive);
      t = _mm256_min_pd(_mm256_max_pd(t, zero), one);
      const __m256d rx = _mm256_fnmadd_pd(t, e.ex, wx);
      const __m256d ry = _mm256_fnmadd_pd(t, e.ey, wy);
      const __m256d d2 = _mm256_fmadd_pd(rx, rx, _mm256_mul_pd(ry, ry));
      if (k == 0) {
        out.best = d2;
        out.t = t;
        out.rx = rx;
        out.ry = ry;
        out.edge = zero;
      } else {
        const __m256d closer = _mm256_cmp_pd(d2, out.best, _CMP_LT_OQ);
        out.best = _mm256_blendv_pd(out.best, d2, closer);
        out.t = _mm256_blendv_pd(out.t, t, closer);
        out.rx = _mm256_blendv_pd(out.rx, rx, closer);
        out.ry = _mm256_blendv_pd(out.ry, ry, closer);
        out.edge = _mm256_blendv_pd(out.edge, _mm256_set1_pd(static_cast<double>(k)), closer);
      }
      const __m256d cross = _mm256_fmsub_pd(e.ex, wy, _mm256_mul_pd(e.ey, wx));
      outside = _mm256_or_pd(
          outside, _mm256_cmp_pd(_mm256_mul_pd(cross, orient_sign_), zero, _CMP_LT_OQ));
    }
    out.inside = _mm256_xor_pd(outside, _mm256_castsi256_pd(_mm256_set1_epi64x(-1)));
    return out;
  }

 private:
  EdgeConsts edges_[3];
  __m256d orient_sign_;
  bool degenerate_ = false;
};

inline __m256i lane_mask(int x, int x1) {
  const __m256i lane = _mm256_setr_epi64x(0, 1, 2, 3);
  const __m256i remaining = _mm256_set1_epi64x(x1 - x);
  // lane <= remaining
  return _mm256_xor_si256(_mm256_cmpgt_epi64(lane, remaining), _mm256_set1_epi64x(-1));
}

inline __m256d active_lanes(const PixelBatch& b, const RasterParams& params) {
  const __m256d within = _mm256_cmp_pd(b.best, _mm256_set1_pd(params.cutoff_sq), _CMP_LE_OQ);
  return _mm256_or_pd(b.inside, within);
}

inline __m256d signed_logit(const PixelBatch& b, const RasterParams& params) {
  const __m256d magnitude = _mm256_mul_pd(b.best, _mm256_set1_pd(params.inv_gamma));
  const __m256d negated = _mm256_sub_pd(_mm256_setzero_pd(), magnitude);
  return _mm256_blendv_pd(negated, magnitude, b.inside);
}

void accumulate_transmittance_avx2(const TriangleSetup& tri, const RasterParams& params,
                                   double* transmittance) {
  const TriangleLanes lanes(tri);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d offsets = _mm256_setr_pd(0.5, 1.5, 2.5, 3.5);
  for (int y = tri.y0; y <= tri.y1; ++y) {
    double* row = transmittance + static_cast<std::size_t>(y) * params.res;
    const __m256d py = _mm256_set1_pd(y + 0.5);
    for (int x = tri.x0; x <= tri.x1; x += 4) {
      const __m256i valid = lane_mask(x, tri.x1);
      const __m256d px = _mm256_add_pd(_mm256_set1_pd(static_cast<double>(x)), offsets);
      const PixelBatch b = lanes.evaluate(px, py);
      const __m256d active = _mm256_and_pd(active_lanes(b, params), _mm256_castsi256_pd(valid));
      if (_mm256_testz_pd(active, active)) continue;
      const __m256d logit = signed_logit(b, params);
      const __m256d factor = _mm256_div_pd(one, _mm256_add_pd(one, exp_pd(logit)));
      const __m256d t = _mm256_maskload_pd(row + x, valid);
      const __m256d updated = _mm256_blendv_pd(t, _mm256_mul_pd(t, factor), active);
      _mm256_maskstore_pd(row + x, valid, updated);
    }
  }
}

void triangle_gradient_avx2(const TriangleSetup& tri, const RasterParams& params,
                            const double* weight, std::array<double, 6>& out) {
  const TriangleLanes lanes(tri);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d offsets = _mm256_setr_pd(0.5, 1.5, 2.5, 3.5);
  const __m256d minus_two_ig = _mm256_set1_pd(-2.0 * params.inv_gamma);
  __m256d acc[6] = {zero, zero, zero, zero, zero, zero};
  for (int y = tri.y0; y <= tri.y1; ++y) {
    const double* row = weight + static_cast<std::size_t>(y) * params.res;
    const __m256d py = _mm256_set1_pd(y + 0.5);
    for (int x = tri.x0; x <= tri.x1; x += 4) {
      const __m256i valid = lane_mask(x, tri.x1);
      const __m256d w = _mm256_maskload_pd(row + x, valid);
      if (_mm256_testz_pd(_mm256_cmp_pd(w, zero, _CMP_NEQ_UQ),
                          _mm256_cmp_pd(w, zero, _CMP_NEQ_UQ))) {
        continue;
      }
      const __m256d px = _mm256_add_pd(_mm256_set1_pd(static_cast<double>(x)), offsets);
      const PixelBatch b = lanes.evaluate(px, py);
      const __m256d active = active_lanes(b, params);
      const __m256d logit = signed_logit(b, params);
      const __m256d sig =
          _mm256_div_pd(one, _mm256_add_pd(one, exp_pd(_mm256_sub_pd(zero, logit))));
      const __m256d sign = _mm256_blendv_pd(_mm256_set1_pd(-1.0), one, b.inside);
      const __m256d c =
          _mm256_and_pd(_mm256_mul_pd(_mm256_mul_pd(w, sig), _mm256_mul_pd(sign, minus_two_ig)),
                        active);
      const __m256d ca = _mm256_mul_pd(c, _mm256_sub_pd(one, b.t));
      const __m256d cb = _mm256_mul_pd(c, b.t);
      const __m256d gxa = _mm256_mul_pd(ca, b.rx), gya = _mm256_mul_pd(ca, b.ry);
      const __m256d gxb = _mm256_mul_pd(cb, b.rx), gyb = _mm256_mul_pd(cb, b.ry);
      for (int k = 0; k < 3; ++k) {
        const __m256d mk = _mm256_cmp_pd(b.edge, _mm256_set1_pd(static_cast<double>(k)), _CMP_EQ_OQ);
        const int a = 2 * k, bb = 2 * ((k + 1) % 3);
        acc[a] = _mm256_add_pd(acc[a], _mm256_and_pd(gxa, mk));
        acc[a + 1] = _mm256_add_pd(acc[a + 1], _mm256_and_pd(gya, mk));
        acc[bb] = _mm256_add_pd(acc[bb], _mm256_and_pd(gxb, mk));
        acc[bb + 1] = _mm256_add_pd(acc[bb + 1], _mm256_and_pd(gyb, mk));
      }
    }
  }
  for (int k = 0; k < 6; ++k) out[k] += hsum_ordered(acc[k]);
}

}  // namespace

const KernelTable& avx2_kernel_table() {
  static const KernelTable table{"avx2", accumulate_transmittance_avx2, triangle_gradient_avx2};
  return table;
}

}  // namespace thinrecon::simd
