#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace cadmr {

// Counter-based generator: each draw mixes (seed, counter), so the state is
// just the pair and identical seed + call sequence reproduces identical
// draws. Streams are derived per purpose ("init", "dropout", "split", ...)
// so adding draws to one stream never shifts another.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return counter_; }
  void set_position(std::uint64_t pos) { counter_ = pos; }

  std::uint64_t next_u64() { return mix64(seed_ + kGolden * ++counter_); }

  // Uniform in [0, 1), 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, two fresh uniforms per draw (no cached second sample, so the
  // counter-to-value mapping stays pure).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Integer in [0, n), n > 0. Modulo bias is irrelevant at 64 bits for the
  // ranges used here (shuffles over at most a few thousand elements).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  static std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

inline std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Independent stream for one purpose under a master seed.
inline RngStream derive_stream(std::uint64_t master_seed, std::string_view purpose) {
  return RngStream(RngStream::mix64(master_seed ^ hash_name(purpose)));
}

}  // namespace cadmr
