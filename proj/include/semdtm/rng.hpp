#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace semdtm {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

// Seed for trial `index` of `kind` under `master`; stable across platforms.
std::uint64_t derive_seed(std::uint64_t master, std::string_view kind, std::uint64_t index);

// mt19937_64 with portable bounded draws (the std distributions are
// implementation-defined, which would break report reproducibility).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // Uniform in [0, n); n must be >= 1.
    std::uint64_t below(std::uint64_t n);
    // Uniform in [lo, hi] inclusive.
    std::int64_t between(std::int64_t lo, std::int64_t hi);
    // Uniform in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace semdtm
