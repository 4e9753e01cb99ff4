#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace probsafe {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Stateless: the output depends only on counter and key.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

/// Maps two 32-bit words to a double in (0, 1] with 53 bits of resolution.
double uniform_open_closed(std::uint32_t hi, std::uint32_t lo);

/// Box-Muller transform of one Philox block into two standard normals.
std::array<double, 2> gaussian_pair(const PhiloxCounter& block);

/// Gaussian noise stream keyed by a 64-bit master seed.
///
/// Every draw is addressed by (stream, step, component), so a trajectory's
/// increments do not depend on how many other trajectories were simulated or
/// in which order. The Philox counter is laid out as
/// `{step, component / 2, stream_lo, stream_hi}`.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  PhiloxKey key() const { return key_; }

  /// Standard normals for components `0..out.size()-1` of (stream, step).
  void standard_normals(std::uint64_t stream, std::uint32_t step, std::span<double> out) const;

  /// Wiener increments `sqrt(dt) * N(0, 1)`.
  void wiener_increments(std::uint64_t stream, std::uint32_t step, double dt,
                         std::span<double> out) const;

 private:
  std::uint64_t seed_;
  PhiloxKey key_;
};

}  // namespace probsafe
