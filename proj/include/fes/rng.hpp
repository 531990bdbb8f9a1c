#ifndef FES_RNG_HPP
#define FES_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace fes {

// All randomness flows through these helpers instead of std distributions,
// whose output is implementation-defined. mt19937_64 itself is fully
// specified, so identical seeds give identical streams on every platform.
using Rng = std::mt19937_64;

/// splitmix64 mix step; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n). Modulo bias is irrelevant at the sizes used here.
inline std::uint64_t bounded(Rng& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

/// Fisher-Yates shuffle with an explicit trace so results are reproducible
/// across standard library implementations.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(bounded(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

/// First k elements of a shuffled index range [0, n); sorted ascending.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng);

}  // namespace fes

#endif  // FES_RNG_HPP
