#pragma once

#include <cmath>
#include <cstdint>

namespace mfc {

// Counter-based Gaussian stream. Each draw is a pure hash of
// (seed, particle, step), so ensembles are reproducible regardless of
// evaluation order and growing the particle count leaves earlier paths
// untouched.
namespace rng {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t particle, std::uint64_t step) {
    std::uint64_t h = mix64(seed ^ 0x8b72e0f5u);
    h = mix64(h ^ (particle * 0xc2b2ae3d27d4eb4fULL));
    h = mix64(h ^ (step * 0x165667b19e3779f9ULL));
    return h;
}

// Uniform in (0,1]: top 53 bits, shifted away from zero.
inline double uniform_from(std::uint64_t bits) {
    return ((bits >> 11) + 1.0) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two hashed uniforms.
inline double standard_normal(std::uint64_t seed, std::uint64_t particle, std::uint64_t step) {
    const std::uint64_t k = key(seed, particle, step);
    const double u1 = uniform_from(k);
    const double u2 = uniform_from(mix64(k ^ 0x6a09e667f3bcc909ULL));
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace rng
}  // namespace mfc
