#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace oens {

/// Purpose tags for deriving independent random streams from one root seed.
/// Keeping parameter initialization, batch shuffling, and data synthesis on
/// separate streams means changing one consumer never perturbs the others.
enum class Stream : std::uint64_t {
  ParamInit = 1,
  Shuffle = 2,
  DataSynthesis = 3,
  GradCheck = 4,
};

namespace detail {

// SplitMix64 step (Steele, Lea, Flood 2014). Used only to mix seeds and
// derive stream states, never as the sampling generator itself.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// xorshift64* generator (Marsaglia shift-register core with Vigna's
/// multiplicative output scrambler). 64-bit state, period 2^64 - 1,
/// deterministic across platforms, cheap to seed and to split.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    state_ = detail::splitmix64(s);
    if (state_ == 0) state_ = 0x2545f4914f6cdd1dULL;  // state must stay nonzero
  }

  /// Derives the generator for (seed, stream, index). `index` separates
  /// per-member / per-epoch sub-streams within one purpose.
  static Rng derive(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    std::uint64_t s = seed;
    std::uint64_t mixed = detail::splitmix64(s);
    s = mixed ^ (static_cast<std::uint64_t>(stream) * 0xd6e8feb86659fd93ULL);
    mixed = detail::splitmix64(s);
    s = mixed ^ (index * 0xa0761d6478bd642fULL);
    mixed = detail::splitmix64(s);
    Rng r(0);
    r.state_ = mixed ? mixed : 0x2545f4914f6cdd1dULL;
    r.has_spare_ = false;
    return r;
  }

  std::uint64_t next_u64() {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Standard normal via Box-Muller; the second variate of each pair is
  /// cached so consecutive calls consume a deterministic number of words.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace oens
