#pragma once

#include <array>
#include <cstdint>

namespace tbptt {

// Deterministic 64-bit generator: xoshiro256** seeded through splitmix64.
// Both recurrences are written out below so any implementation can reproduce
// the stream bit-for-bit; no platform generators are involved.
//
//   splitmix64:  z = (s += 0x9E3779B97F4A7C15)
//                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//                return z ^ (z >> 31)
//
//   xoshiro256**: r = rotl(s1 * 5, 7) * 9; t = s1 << 17;
//                 s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t;
//                 s3 = rotl(s3, 45); return r
//
// uniform() maps the top 53 bits onto [0,1); uniform_int() uses rejection
// sampling, so both are exact on every platform.  normal() uses the
// Marsaglia polar method.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  int uniform_int(int n);                 // {0, ..., n-1}, unbiased
  double normal();                        // standard normal

  // Derives an independent sub-seed; used to split one user seed into
  // decorrelated streams (data, init, profiling, ...).
  static uint64_t derive(uint64_t seed, uint64_t salt);

 private:
  std::array<uint64_t, 4> state_{};
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace tbptt
