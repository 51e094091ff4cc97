#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace cmldiff {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Stream seed for (master, role, replica):
///   stream_id = splitmix64(master ^ splitmix64(fnv1a64(role) ^ splitmix64(replica)))
/// Independent of thread count and scheduling.
inline constexpr std::uint64_t stream_seed(std::uint64_t master, std::string_view role, std::uint64_t replica) {
  return splitmix64(master ^ splitmix64(fnv1a64(role) ^ splitmix64(replica)));
}

/// Counter-based hash used where a value must be a pure function of its indices.
inline constexpr std::uint64_t counter_hash(std::uint64_t key, std::uint64_t a, std::uint64_t b) {
  return splitmix64(key ^ splitmix64(a * 0xD1B54A32D192ED03ULL + splitmix64(b)));
}

/// Portable random stream: mt19937_64 output is fixed by the standard; the
/// real-valued conversions below are ours so results do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::string_view role, std::uint64_t replica)
      : engine_(stream_seed(master, role, replica)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the grid k * 2^-53 in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cmldiff
