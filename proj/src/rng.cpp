#include "probsafe/rng.hpp"

#include <cmath>
#include <numbers>

namespace probsafe {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

double uniform_open_closed(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

std::array<double, 2> gaussian_pair(const PhiloxCounter& block) {
  const double u1 = uniform_open_closed(block[0], block[1]);
  const double u2 = uniform_open_closed(block[2], block[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

NoiseStream::NoiseStream(std::uint64_t seed)
    : seed_(seed),
      key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

void NoiseStream::standard_normals(std::uint64_t stream, std::uint32_t step,
                                   std::span<double> out) const {
  const auto lo = static_cast<std::uint32_t>(stream);
  const auto hi = static_cast<std::uint32_t>(stream >> 32);
  for (std::size_t c = 0; c < out.size(); c += 2) {
    const auto pair = gaussian_pair(philox4x32_10({step, static_cast<std::uint32_t>(c / 2), lo, hi}, key_));
    out[c] = pair[0];
    if (c + 1 < out.size()) out[c + 1] = pair[1];
  }
}

void NoiseStream::wiener_increments(std::uint64_t stream, std::uint32_t step, double dt,
                                    std::span<double> out) const {
  standard_normals(stream, step, out);
  const double scale = std::sqrt(dt);
  for (double& v : out) v *= scale;
}

}  // namespace probsafe
