#include "curlyfm/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace curlyfm {

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
  for (std::uint64_t tag : tags) h = mix64(h ^ mix64(tag + 0x14057b7ef767814fULL));
  return h;
}

std::uint64_t hash_point(std::span<const double> x, double t) {
  std::uint64_t h = mix64(std::bit_cast<std::uint64_t>(t));
  for (double v : x) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  return h;
}

double keyed_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t bits = mix64(key ^ mix64(counter));
  // 53 random mantissa bits, shifted into (0, 1).
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double keyed_normal(std::uint64_t key, std::uint64_t counter) {
  const double u1 = keyed_uniform(key, 2 * counter);
  const double u2 = keyed_uniform(key, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace curlyfm
