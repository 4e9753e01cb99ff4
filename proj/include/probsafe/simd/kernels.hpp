#pragma once

// Data-parallel inner loops of the Monte Carlo ensemble engine.
//
// Each kernel has a scalar reference implementation and an AVX2 variant. The
// variants are required to be bit-identical to the reference (same operation
// order, no FMA contraction); tests/unit/test_rng_simd.cpp checks this on random
// inputs. `kernels()` returns the table chosen at runtime.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace probsafe::simd {

/// Philox4x32-10 over `count` consecutive streams starting at `stream0`, all at
/// the same (step, block). Writes 4 words per stream into `out` (AoS).
using PhiloxBatchFn = void (*)(std::uint32_t key0, std::uint32_t key1, std::uint32_t step,
                               std::uint32_t block, std::uint64_t stream0, std::size_t count,
                               std::uint32_t* out);

/// Euler-Maruyama update of scalar affine closed loops:
/// `x[i] = x[i] + (a * x[i] + c) * dt + s * dw[i]`.
using AffineStepFn = void (*)(std::size_t count, double* x, const double* dw, double a, double c,
                              double dt, double s);

/// Running path statistics of the margin gap `slope * x + offset - margin`.
/// `exit_step` records the first step with a negative gap, `entry_step` the
/// first step with a non-negative gap; -1 means "not yet".
using PathStatsFn = void (*)(std::size_t count, const double* x, double slope, double offset,
                             double margin, std::int32_t step, double* min_gap, double* max_gap,
                             std::int32_t* exit_step, std::int32_t* entry_step);

struct KernelTable {
  std::string_view name;
  PhiloxBatchFn philox_batch;
  AffineStepFn affine_step;
  PathStatsFn path_stats;
};

const KernelTable& scalar_kernels();

/// nullptr when the CPU (or the build) lacks AVX2.
const KernelTable* avx2_kernels();

/// Table selected once per process: AVX2 when available unless the
/// environment variable PROBSAFE_SIMD is set to "scalar".
const KernelTable& kernels();

namespace detail {
void philox_batch_scalar(std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t, std::uint64_t,
                         std::size_t, std::uint32_t*);
void affine_step_scalar(std::size_t, double*, const double*, double, double, double, double);
void path_stats_scalar(std::size_t, const double*, double, double, double, std::int32_t, double*,
                       double*, std::int32_t*, std::int32_t*);

#if defined(__x86_64__) || defined(_M_X64)
void philox_batch_avx2(std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t, std::uint64_t,
                       std::size_t, std::uint32_t*);
void affine_step_avx2(std::size_t, double*, const double*, double, double, double, double);
void path_stats_avx2(std::size_t, const double*, double, double, double, std::int32_t, double*,
                     double*, std::int32_t*, std::int32_t*);
#endif
}  // namespace detail

}  // namespace probsafe::simd
