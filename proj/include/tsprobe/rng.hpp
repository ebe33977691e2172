#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace tsprobe {

/// SplitMix64 finalizer (a bijection on 64-bit words).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a stream id.
///
/// For a fixed master seed the map stream_id -> seed is injective, since it
/// is a composition of bijections.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id) noexcept {
  constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
  constexpr std::uint64_t kMasterSalt = 0x5851f42d4c957f2dull;
  return mix64(mix64(master_seed ^ kMasterSalt) + (stream_id + 1) * kGolden);
}

/// xoshiro256** seeded through SplitMix64, with platform-independent
/// uniform, normal (Marsaglia polar) and gamma (Marsaglia-Tsang) draws.
///
/// Distribution code lives here instead of <random> because the standard
/// distributions are implementation-defined and would break cross-platform
/// reproducibility.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return next(); }
  std::uint64_t next() noexcept;

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Uniform on [lo, hi); returns lo when lo == hi.
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer on the closed range [lo, hi] (unbiased).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;
  /// Gamma(shape, scale = 1); shape must be positive.
  double gamma(double shape) noexcept;

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// In-place Fisher-Yates shuffle driven by Rng::uniform_int.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace tsprobe
