#pragma once

// Counter-based pseudo-random generation.
//
// Every random quantity in the library is a pure function of a 64-bit key and a
// 128-bit counter (Philox4x32-10). Matrix entries are addressed directly by
// (column, row pair), so any block of any embedding matrix can be produced
// without generating its predecessors. Sequential streams (simulation, trial
// sampling, erasure) are the same generator with an incrementing counter.

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>

namespace sketchmem {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : text) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Mixes an arbitrary number of 64-bit words into one key.
template <typename... Words>
inline constexpr std::uint64_t mix_key(std::uint64_t first, Words... rest) noexcept {
  std::uint64_t h = splitmix64(first);
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(rest))), ...);
  return h;
}

using PhiloxCounter = std::array<std::uint32_t, 4>;

/// Philox4x32 with 10 rounds (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
inline PhiloxCounter philox4x32(PhiloxCounter ctr, std::uint64_t key) noexcept {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  auto k0 = static_cast<std::uint32_t>(key);
  auto k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0, static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1, static_cast<std::uint32_t>(p0)};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

// Uniform in the open interval (0, 1) with 53 bits of resolution.
inline double open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Two independent standard normals for one (key, counter) pair, via Box-Muller.
inline std::pair<double, double> gaussian_pair(std::uint64_t key, std::uint64_t hi,
                                               std::uint64_t lo) noexcept {
  const PhiloxCounter out = philox4x32({static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(lo >> 32),
                                        static_cast<std::uint32_t>(hi), static_cast<std::uint32_t>(hi >> 32)},
                                       key);
  const double u1 = open_unit((std::uint64_t{out[0]} << 32) | out[1]);
  const double u2 = open_unit((std::uint64_t{out[2]} << 32) | out[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 6.283185307179586 * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Sequential stream over the Philox counter space. Cheap to copy; two
/// streams with the same key produce identical sequences.
class Stream {
 public:
  explicit Stream(std::uint64_t key) noexcept : key_(key) {}

  /// Named sub-stream: all randomness in a run flows from one seed through these.
  static Stream derive(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) noexcept {
    return Stream(mix_key(seed, fnv1a(name), index));
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

  std::uint64_t next_u64() noexcept {
    if (buffered_ == 0) {
      block_ = philox4x32({static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32), 0u,
                           0x53545245u},
                          key_);
      ++counter_;
      buffered_ = 2;
    }
    const int slot = 2 - buffered_;
    --buffered_;
    return (std::uint64_t{block_[2 * slot]} << 32) | block_[2 * slot + 1];
  }

  double uniform() noexcept { return open_unit(next_u64()); }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= limit) return r % n;
    }
  }

  /// Integer uniformly drawn from the closed range [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) noexcept {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  PhiloxCounter block_{};
  int buffered_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sketchmem
