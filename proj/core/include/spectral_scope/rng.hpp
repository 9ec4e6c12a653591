#pragma once

#include <cstdint>
#include <string_view>

namespace spectral_scope {

/// Counter-based generator used by every resampling routine.
///
/// Draw k (k = 0, 1, 2, ...) of a stream keyed by `seed` is
///
///     splitmix64_mix(seed + (k + 1) * 0x9E3779B97F4A7C15)   (mod 2^64)
///
/// where splitmix64_mix is the SplitMix64 output finalizer:
///
///     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///     z =  z ^ (z >> 31)
///
/// This is exactly the SplitMix64 sequence, so any language with 64-bit
/// unsigned wrap-around arithmetic reproduces the golden values in the tests.
/// Bounded integers use Lemire's multiply-shift with rejection; unit doubles
/// take the top 53 bits.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t at(std::uint64_t counter) const noexcept {
    return mix(seed_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
  }

  std::uint64_t next() noexcept { return at(counter_++); }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    __extension__ using u128 = unsigned __int128;
    u128 m = static_cast<u128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<u128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1).
  double unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Per-task stream key: seed XOR fnv1a64(label).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
  return seed ^ fnv1a64(label);
}

/// Per-task stream key for integer coordinates (sample, k, repeat, ...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return CounterRng::mix(seed ^ CounterRng::mix(a * 0x9E3779B97F4A7C15ULL + b + 1));
}

}  // namespace spectral_scope
