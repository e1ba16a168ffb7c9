#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace relayflow {

/// Seeded generator that derives independent named child streams, so every
/// consumer of randomness is reproducible from a single root seed.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  SplitRng split(std::string_view name) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : name) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return SplitRng(mix(seed_ ^ mix(h)));
  }

  SplitRng split(std::uint64_t index) const { return SplitRng(mix(seed_ + mix(index + 0x9e3779b97f4a7c15ull))); }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::mt19937_64& engine() noexcept { return engine_; }

  static std::uint64_t mix(std::uint64_t z) {  // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace relayflow
