#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace almanac {

/// Engine used everywhere a seeded stream is needed. The engine output is fixed
/// by the standard; the helpers below avoid library-specific distributions.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Independent stream for round `index` of a run seeded with `seed`.
Rng derive_rng(std::uint64_t seed, std::uint64_t index);

/// Uniform integer in [0, n). `n` must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform double in [0, 1) with 53 bits of precision.
double uniform_unit(Rng& rng);

bool bernoulli(Rng& rng, double p);

template <typename T>
const T& pick(Rng& rng, std::span<const T> items) {
    return items[uniform_index(rng, items.size())];
}

}  // namespace almanac
