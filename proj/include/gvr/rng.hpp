// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace gvr
{

using Rng = std::mt19937_64;

// The std distributions are implementation-defined; these helpers only use the
// raw engine output so seeded runs replay identically everywhere.

inline auto uniform01(Rng& rng) -> double
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [lo, hi] inclusive.
inline auto uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) -> std::int64_t
{
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0)
        return lo + static_cast<std::int64_t>(rng());
    // Rejection keeps the draw unbiased.
    const auto limit = (~std::uint64_t {0}) - ((~std::uint64_t {0}) % span);
    auto draw = rng();
    while (draw >= limit)
        draw = rng();
    return lo + static_cast<std::int64_t>(draw % span);
}

inline auto bernoulli(Rng& rng, double p) -> bool
{
    return uniform01(rng) < p;
}

/// SplitMix64 finalizer; used to derive independent child seeds.
inline auto mix_seed(std::uint64_t x) -> std::uint64_t
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline auto derive_seed(std::uint64_t root, std::uint64_t stream) -> std::uint64_t
{
    return mix_seed(mix_seed(root) ^ (stream * 0xd1b54a32d192ed03ULL));
}

template <typename T>
void shuffle(std::span<T> items, Rng& rng)
{
    for (auto i = items.size(); i > 1; --i)
    {
        const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace gvr
