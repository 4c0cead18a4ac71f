// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace edgetune {

// Deterministic samplers on top of mt19937_64. The std:: distributions are
// implementation-defined, which would break golden files across toolchains,
// so the mapping from raw bits to samples is pinned here.
struct Rng {
    explicit Rng(std::uint64_t seed) : engine(seed) {}

    std::mt19937_64 engine;

    std::uint64_t next() { return engine(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform01() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller, one sample per call (the sibling sample is discarded so the
    // stream does not depend on call parity).
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
        return mean + stddev * z;
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return engine() % n; }
};

}  // namespace edgetune
