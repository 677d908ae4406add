// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "m3kg/matrix.hpp"

namespace m3kg {

// Seeded RNG with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard; the distribution classes are not, so we derive
// doubles directly from the raw stream to keep runs reproducible across
// toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int below(int n) { return static_cast<int>(eng_() % static_cast<uint64_t>(n)); }

    void fill_uniform(Mat& m, double lo, double hi) {
        for (double& v : m.data) v = uniform(lo, hi);
    }

private:
    std::mt19937_64 eng_;
};

} // namespace m3kg
