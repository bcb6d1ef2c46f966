#pragma once

#include <cstdint>
#include <random>

namespace balloc {

/// Identifier recorded in run metadata. The mt19937_64 output stream is
/// fully specified by the standard, so (algorithm, seed) pins every draw
/// across platforms. Range and double mappings below are our own, fixed.
inline constexpr char kRngId[] = "std::mt19937_64";
inline constexpr char kSeedDerivationId[] = "splitmix64-mix64";

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

/// seed_k = mix64(master_seed XOR (k+1) * golden_gamma). Trials draw from
/// independent streams no matter in which order (or subset) they run.
inline std::uint64_t derive_trial_seed(std::uint64_t master_seed, std::uint64_t trial_index) {
  return mix64(master_seed ^ ((trial_index + 1) * 0x9E3779B97F4A7C15ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0,1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [0, bound), unbiased (Lemire multiply-shift with rejection).
  std::uint64_t next_below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t threshold = -bound % bound;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace balloc
