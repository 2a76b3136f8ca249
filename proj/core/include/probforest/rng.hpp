#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace probforest {

/// 64-bit finalizer from SplitMix64. Bijective, so distinct inputs give
/// distinct outputs.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Combines two 64-bit values into a derived seed. Order matters:
/// mix_seed(a, b) != mix_seed(b, a) in general.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) noexcept {
  return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

/// FNV-1a over the bytes of `s`; used to fold identifiers into seeds.
std::uint64_t hash_string(std::string_view s) noexcept;

/// Deterministic generator. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; the distributions below are written
/// out here because the std:: distributions are implementation-defined and
/// would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n), unbiased (Lemire's multiply-and-reject).
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via the Marsaglia polar method.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace probforest
