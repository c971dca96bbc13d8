#include <cstdlib>
#include <string_view>

#include "thinrecon/simd/raster_kernels.hpp"

namespace thinrecon::simd {

#if defined(THINRECON_HAVE_AVX2_KERNELS)
const KernelTable& avx2_kernel_table();
#endif

const KernelTable* avx2_kernels() {
#if defined(THINRECON_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable* chosen = [] {
    const char* env = std::getenv("THINRECON_SIMD");
    const std::string_view want = env ? env : "";
    if (want == "scalar") return &scalar_kernels();
    if (const KernelTable* avx2 = avx2_kernels()) return avx2;
    return &scalar_kernels();
  }();
  return *chosen;
}

}  // namespace thinrecon::simd
