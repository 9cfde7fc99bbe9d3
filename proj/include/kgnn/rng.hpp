#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace kgnn {

/// SplitMix64 finalizer. Used to expand seeds and to derive child seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes a parent seed with a stream index into an independent child seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// FNV-1a 64-bit hash over bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

/// xoshiro256** seeded through SplitMix64. All distributions are implemented
/// here so streams are identical on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller (no cached second value).
  double normal();
  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace kgnn
