#pragma once

// Seeded random streams. One root seed fans out into independent streams,
// one per purpose, so that changing how many draws one component makes never
// shifts another component's sequence. The draw routines are written out
// here rather than taken from <random> distributions, whose output is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace gdro {

enum class Stream : std::uint64_t {
    budget = 0,
    anchor = 1,
    depround = 2,
    data = 3,
    evaluation = 4,
    construction = 5,
    diagnostics = 6,
};

class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32),
                          static_cast<std::uint32_t>(substream),
                          static_cast<std::uint32_t>(substream >> 32)};
        engine_.seed(seq);
    }

    RandomStream(std::uint64_t seed, Stream stream, std::uint64_t substream = 0)
        : RandomStream(seed, static_cast<std::uint64_t>(stream), substream) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer on [0, n), unbiased by rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do x = engine_();
        while (x >= limit);
        return x % n;
    }

    /// Uniform integer on [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(uniform_index(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace gdro
