// Seeding utilities shared by the simulator, the optimizer and the harness.
//
// Every stochastic component takes an explicit 64-bit seed.  Sub-seeds are
// derived with splitmix64 so that (master seed, index) -> seed is stable
// across platforms and versions.
#pragma once

#include <cstdint>
#include <random>

namespace cloaqc {

// splitmix64 step (Steele, Lea, Flood 2014 public-domain reference).
inline std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d9e747f642fc9dULL;
    return z ^ (z >> 31);
}

// Stable sub-seed derivation: realization i of a run with a master seed uses
// derive_seed(master, i).  Documented contract of the harness.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64(s);
}

// Uniform double in [0,1) from the top 53 bits; avoids the
// implementation-defined behaviour of std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& gen)
{
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on uniform01 draws (deterministic given the
// generator state, unlike std::normal_distribution).
inline double normal01(std::mt19937_64& gen)
{
    double u1 = uniform01(gen);
    double u2 = uniform01(gen);
    while (u1 <= 0.0) u1 = uniform01(gen);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

} // namespace cloaqc
