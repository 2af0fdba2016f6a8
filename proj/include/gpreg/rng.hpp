#pragma once

#include <cstdint>
#include <random>

namespace gpreg {

// All stochastic decisions run on explicitly owned mt19937_64 streams so
// that a (seed, stream tag, index) triple pins the whole run. The helpers
// below avoid std::*_distribution on purpose: their output sequences are
// not specified by the standard, ours are.
using Rng = std::mt19937_64;

enum : std::uint64_t {
  kMainStream = 0,    // initialization + genetic operators, consumed in order
  kSampleStream = 1,  // per-generation pixel sampling, index = generation
  kSceneStream = 2,   // synthetic scene lattices, index = octave
};

inline Rng make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  std::seed_seq seq{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

// Uniform in [0, n). Multiply-shift; bias is < n / 2^64.
inline std::size_t rand_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(
      (static_cast<unsigned __int128>(rng()) * n) >> 64);
}

// Uniform in [0, 1) with 53 random bits.
inline double rand_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rand_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_unit(rng);
}

inline bool rand_chance(Rng& rng, double p) {
  return rand_unit(rng) < p;
}

}  // namespace gpreg
