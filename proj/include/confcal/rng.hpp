#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace confcal {

// Deterministic draws on top of mt19937_64. The standard distributions are
// implementation-defined, so anything that feeds reproducible artifacts goes
// through these instead.

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

/// Uniform double in [0, 1) with 53 bits of precision.
double uniform_unit(std::mt19937_64& rng);

/// Standard normal via Box-Muller.
double normal_draw(std::mt19937_64& rng);

/// Uniformly distributed direction on the unit sphere in `dim` dimensions.
std::vector<double> unit_sphere_draw(std::mt19937_64& rng, std::size_t dim);

/// SplitMix64 step; used to combine seeds deterministically.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

} // namespace confcal
