#pragma once

#include <cstdint>
#include <random>

namespace emoprobe {

// The standard distributions are implementation-defined, so every sampler in
// the library draws from mt19937_64 through these helpers to stay bit-stable
// across standard libraries.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic child seed for a named sub-stream (epoch, class, purpose).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Uniform integer in [0, n). n must be > 0.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

}  // namespace emoprobe
