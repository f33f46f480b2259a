#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace spm {

/// Every stochastic operation takes an explicit stream; nothing reads global
/// state, so results are a pure function of (inputs, seed).
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed from a tuple such as (global_seed, stream tag,
/// epoch, image_index).
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x5350'4d5f'5345'4544ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Stream tags used with derive_seed.
enum class Stream : std::uint64_t {
  kWeak = 1,
  kStrongQuery = 2,
  kStrongKey = 3,
  kBatch = 4,
  kShuffle = 5,
  kInit = 6,
  kGeometry = 7,
  kStyle = 8,
  kLabels = 9,
  kPreview = 10,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

}  // namespace spm
