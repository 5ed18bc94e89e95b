// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace phlab {

/// Counter-based generator: every draw is a pure function of
/// (seed, sample index, counter), so results do not depend on which
/// worker evaluates a sample or in what order.
class CounterRng {
public:
    constexpr explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    constexpr std::uint64_t bits(std::uint64_t index, std::uint64_t counter) const {
        std::uint64_t h = mix(seed_ ^ 0x243f6a8885a308d3ULL);
        h = mix(h + index * 0x9e3779b97f4a7c15ULL);
        h = mix(h ^ (counter + 0xb7e151628aed2a6bULL));
        return h;
    }

    /// Uniform double in [0,1) with 53 random bits.
    constexpr double uniform(std::uint64_t index, std::uint64_t counter) const {
        return static_cast<double>(bits(index, counter) >> 11) * 0x1.0p-53;
    }

    constexpr std::uint64_t seed() const { return seed_; }

private:
    // splitmix64 finalizer
    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
};

}  // namespace phlab
