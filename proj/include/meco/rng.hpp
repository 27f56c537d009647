#pragma once

#include <cstdint>
#include <random>

namespace meco {

// Portable seeded source. The raw stream is std::mt19937_64 (bit-exact across
// standard libraries); the transforms below are pinned here rather than
// delegated to <random> distributions, whose algorithms are unspecified.
//
//   uniform()  = (next() >> 11) * 2^-53                         in [0, 1)
//   normal()   = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)             one draw per two uniforms
//   below(n)   = rejection sampling: redraw while r < (2^64 - n) mod n, return r mod n
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform();
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    std::uint64_t below(std::uint64_t n);

  private:
    std::mt19937_64 engine_;
};

// Derives an independent stream seed for a sub-task (e.g. one layer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace meco
