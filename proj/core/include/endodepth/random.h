#ifndef ENDODEPTH_RANDOM_H_
#define ENDODEPTH_RANDOM_H_

#include <cstdint>
#include <random>

namespace endodepth {

// std::mt19937_64 output is fixed by the standard; the distributions in
// <random> are not. These helpers keep draws identical across standard
// libraries so seeded runs replay bit-for-bit anywhere.
using Rng = std::mt19937_64;

inline double UniformUnit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double UniformReal(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * UniformUnit(rng);
}

// Inclusive range [lo, hi].
inline int UniformInt(Rng& rng, int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(rng() % span);
}

}  // namespace endodepth

#endif  // ENDODEPTH_RANDOM_H_
