// AVX2 variants of the ensemble kernels. Compiled with -mavx2 -mno-fma and only
// called after a runtime CPU check.

#include "probsafe/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace probsafe::simd::detail {

namespace {

inline void mulhilo8(__m256i a, __m256i mul, __m256i& hi, __m256i& lo) {
  const __m256i even = _mm256_mul_epu32(a, mul);
  const __m256i odd = _mm256_mul_epu32(_mm256_srli_epi64(a, 32), mul);
  lo = _mm256_blend_epi32(even, _mm256_slli_epi64(odd, 32), 0b10101010);
  hi = _mm256_blend_epi32(_mm256_srli_epi64(even, 32), odd, 0b10101010);
}

}  // namespace

void philox_batch_avx2(std::uint32_t key0, std::uint32_t key1, std::uint32_t step,
                       std::uint32_t block, std::uint64_t stream0, std::size_t count,
                       std::uint32_t* out) {
  const __m256i mul0 = _mm256_set1_epi32(static_cast<int>(0xD2511F53u));
  const __m256i mul1 = _mm256_set1_epi32(static_cast<int>(0xCD9E8D57u));
  std::size_t i = 0;
  alignas(32) std::uint32_t lo_words[8], hi_words[8];
  alignas(32) std::uint32_t w0[8], w1[8], w2[8], w3[8];
  for (; i + 8 <= count; i += 8) {
    for (int l = 0; l < 8; ++l) {
      const std::uint64_t s = stream0 + i + static_cast<std::uint64_t>(l);
      lo_words[l] = static_cast<std::uint32_t>(s);
      hi_words[l] = static_cast<std::uint32_t>(s >> 32);
    }
    __m256i c0 = _mm256_set1_epi32(static_cast<int>(step));
    __m256i c1 = _mm256_set1_epi32(static_cast<int>(block));
    __m256i c2 = _mm256_load_si256(reinterpret_cast<const __m256i*>(lo_words));
    __m256i c3 = _mm256_load_si256(reinterpret_cast<const __m256i*>(hi_words));
    std::uint32_t k0 = key0, k1 = key1;
    for (int round = 0; round < 10; ++round) {
      __m256i hi0, lo0, hi1, lo1;
      mulhilo8(c0, mul0, hi0, lo0);
      mulhilo8(c2, mul1, hi1, lo1);
      const __m256i kv0 = _mm256_set1_epi32(static_cast<int>(k0));
      const __m256i kv1 = _mm256_set1_epi32(static_cast<int>(k1));
      c0 = _mm256_xor_si256(_mm256_xor_si256(hi1, c1), kv0);
      c1 = lo1;
      c2 = _mm256_xor_si256(_mm256_xor_si256(hi0, c3), kv1);
      c3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    _mm256_store_si256(reinterpret_cast<__m256i*>(w0), c0);
    _mm256_store_si256(reinterpret_cast<__m256i*>(w1), c1);
    _mm256_store_si256(reinterpret_cast<__m256i*>(w2), c2);
    _mm256_store_si256(reinterpret_cast<__m256i*>(w3), c3);
    for (int l = 0; l < 8; ++l) {
      std::uint32_t* o = out + 4 * (i + static_cast<std::size_t>(l));
      o[0] = w0[l];
      o[1] = w1[l];
      o[2] = w2[l];
      o[3] = w3[l];
    }
  }
  if (i < count) philox_batch_scalar(key0, key1, step, block, stream0 + i, count - i, out + 4 * i);
}

void affine_step_avx2(std::size_t count, double* x, const double* dw, double a, double c,
                      double dt, double s) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vdt = _mm256_set1_pd(dt);
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d drift = _mm256_add_pd(_mm256_mul_pd(va, xv), vc);
    const __m256d moved = _mm256_add_pd(xv, _mm256_mul_pd(drift, vdt));
    _mm256_storeu_pd(x + i, _mm256_add_pd(moved, _mm256_mul_pd(vs, _mm256_loadu_pd(dw + i))));
  }
  if (i < count) affine_step_scalar(count - i, x + i, dw + i, a, c, dt, s);
}

void path_stats_avx2(std::size_t count, const double* x, double slope, double offset,
                     double margin, std::int32_t step, double* min_gap, double* max_gap,
                     std::int32_t* exit_step, std::int32_t* entry_step) {
  const __m256d vslope = _mm256_set1_pd(slope);
  const __m256d voff = _mm256_set1_pd(offset);
  const __m256d vmargin = _mm256_set1_pd(margin);
  const __m256d zero = _mm256_setzero_pd();
  const __m128i vstep = _mm_set1_epi32(step);
  const __m128i none = _mm_set1_epi32(-1);
  // Gathers the low 32 bits of each 64-bit mask lane into the low 128 bits.
  const __m256i pick = _mm256_setr_epi32(0, 2, 4, 6, 0, 2, 4, 6);
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const __m256d gap =
        _mm256_sub_pd(_mm256_add_pd(_mm256_mul_pd(vslope, _mm256_loadu_pd(x + i)), voff), vmargin);
    const __m256d mn = _mm256_loadu_pd(min_gap + i);
    const __m256d mx = _mm256_loadu_pd(max_gap + i);
    _mm256_storeu_pd(min_gap + i, _mm256_blendv_pd(mn, gap, _mm256_cmp_pd(gap, mn, _CMP_LT_OQ)));
    _mm256_storeu_pd(max_gap + i, _mm256_blendv_pd(mx, gap, _mm256_cmp_pd(gap, mx, _CMP_GT_OQ)));

    const __m128i below = _mm256_castsi256_si128(_mm256_permutevar8x32_epi32(
        _mm256_castpd_si256(_mm256_cmp_pd(gap, zero, _CMP_LT_OQ)), pick));
    const __m128i above = _mm256_castsi256_si128(_mm256_permutevar8x32_epi32(
        _mm256_castpd_si256(_mm256_cmp_pd(gap, zero, _CMP_GE_OQ)), pick));

    const __m128i ex = _mm_loadu_si128(reinterpret_cast<const __m128i*>(exit_step + i));
    const __m128i en = _mm_loadu_si128(reinterpret_cast<const __m128i*>(entry_step + i));
    const __m128i set_ex = _mm_and_si128(below, _mm_cmpeq_epi32(ex, none));
    const __m128i set_en = _mm_and_si128(above, _mm_cmpeq_epi32(en, none));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(exit_step + i), _mm_blendv_epi8(ex, vstep, set_ex));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(entry_step + i), _mm_blendv_epi8(en, vstep, set_en));
  }
  if (i < count)
    path_stats_scalar(count - i, x + i, slope, offset, margin, step, min_gap + i, max_gap + i,
                      exit_step + i, entry_step + i);
}

}  // namespace probsafe::simd::detail

#endif
