#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace curlyfm {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream key from a base seed and a list of tags
/// (stage, step, purpose, ...). Streams with different tags do not overlap.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Stateless hash of a point: used to key noise on the query location.
std::uint64_t hash_point(std::span<const double> x, double t);

/// Counter-based standard normal: the value depends only on (key, counter).
double keyed_normal(std::uint64_t key, std::uint64_t counter);
double keyed_uniform(std::uint64_t key, std::uint64_t counter);

/// Sequential stream over std::mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace curlyfm
