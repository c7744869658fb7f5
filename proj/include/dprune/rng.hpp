#pragma once

#include <cstdint>

namespace dprune {

// xoshiro256++ seeded through splitmix64. Both algorithms are fully pinned,
// so a seed produces the same stream on every platform; std:: distributions
// are avoided for the same reason.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // uniform double in [0, 1), 53 mantissa bits
    double uniform();

    // uniform double in [lo, hi)
    double uniform(double lo, double hi);

    // unbiased integer in [0, bound), bound >= 1
    std::uint64_t index(std::uint64_t bound);

private:
    std::uint64_t s_[4];
};

// Deterministic combiner for deriving sub-stream seeds (epoch shuffles,
// dropout stream, per-run seeds).
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

}  // namespace dprune
