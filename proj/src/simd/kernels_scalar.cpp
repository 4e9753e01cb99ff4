#include "probsafe/rng.hpp"
#include "probsafe/simd/kernels.hpp"

namespace probsafe::simd::detail {

void philox_batch_scalar(std::uint32_t key0, std::uint32_t key1, std::uint32_t step,
                         std::uint32_t block, std::uint64_t stream0, std::size_t count,
                         std::uint32_t* out) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t stream = stream0 + i;
    const auto r = philox4x32_10({step, block, static_cast<std::uint32_t>(stream),
                                  static_cast<std::uint32_t>(stream >> 32)},
                                 {key0, key1});
    out[4 * i + 0] = r[0];
    out[4 * i + 1] = r[1];
    out[4 * i + 2] = r[2];
    out[4 * i + 3] = r[3];
  }
}

void affine_step_scalar(std::size_t count, double* x, const double* dw, double a, double c,
                        double dt, double s) {
  for (std::size_t i = 0; i < count; ++i) {
    const double drift = a * x[i] + c;
    x[i] = x[i] + drift * dt + s * dw[i];
  }
}

void path_stats_scalar(std::size_t count, const double* x, double slope, double offset,
                       double margin, std::int32_t step, double* min_gap, double* max_gap,
                       std::int32_t* exit_step, std::int32_t* entry_step) {
  for (std::size_t i = 0; i < count; ++i) {
    const double gap = (slope * x[i] + offset) - margin;
    if (gap < min_gap[i]) min_gap[i] = gap;
    if (gap > max_gap[i]) max_gap[i] = gap;
    if (exit_step[i] < 0 && gap < 0.0) exit_step[i] = step;
    if (entry_step[i] < 0 && gap >= 0.0) entry_step[i] = step;
  }
}

}  // namespace probsafe::simd::detail
