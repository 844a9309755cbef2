#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace retro::rng {

// SplitMix64 finalizer. Full-period avalanche mix, the usual constants.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: draw i of stream s under seed k is a pure
// function of (k, s, i), so independent streams can be consumed in
// parallel while keeping every result reproducible from the seed alone.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(mix64(seed) ^ (stream * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL))) {}

  std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n). Rejection on the multiply-shift
  // method keeps the draw exact for any n.
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal via Box-Muller; consumes two draws per pair.
  double next_gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable per-purpose seed derivation from a master seed, so every
// stochastic stage in a run gets its own documented stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

} // namespace retro::rng
