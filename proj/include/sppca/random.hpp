#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sppca {

// Counter-based standard normal generator.
//
// Every variate is a pure function of (seed, counter): two SplitMix64 outputs
// are turned into uniforms on (0, 1] and combined with the cosine branch of the
// Box-Muller transform. Entry (i, j) of a rows x cols Gaussian matrix uses
// counter i * cols + j, so any row can be regenerated independently and the
// stream does not depend on the standard library's distribution classes.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent sub-seed for a named purpose (e.g. the second test matrix).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return splitmix64(seed ^ splitmix64(tag + 0x5DEECE66Dull));
}

inline double standard_normal(std::uint64_t seed, std::uint64_t counter) noexcept {
  const std::uint64_t key = splitmix64(seed);
  const std::uint64_t a = splitmix64(key + 2 * counter);
  const std::uint64_t b = splitmix64(key + 2 * counter + 1);
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  const double u1 = static_cast<double>((a >> 11) + 1) * scale;
  const double u2 = static_cast<double>(b >> 11) * scale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace sppca
