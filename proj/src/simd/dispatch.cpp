#include <cstdlib>
#include <string_view>

#include "probsafe/simd/kernels.hpp"

namespace probsafe::simd {

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", &detail::philox_batch_scalar,
                                 &detail::affine_step_scalar, &detail::path_stats_scalar};
  return table;
}

const KernelTable* avx2_kernels() {
#if defined(__x86_64__) || defined(_M_X64)
  static const bool supported = __builtin_cpu_supports("avx2");
  static const KernelTable table{"avx2", &detail::philox_batch_avx2, &detail::affine_step_avx2,
                                 &detail::path_stats_avx2};
  return supported ? &table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& kernels() {
  static const KernelTable& chosen = [] () -> const KernelTable& {
    const char* env = std::getenv("PROBSAFE_SIMD");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_kernels();
    if (const KernelTable* t = avx2_kernels()) return *t;
    return scalar_kernels();
  }();
  return chosen;
}

}  // namespace probsafe::simd
