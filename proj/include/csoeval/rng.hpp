#pragma once

// Seeded random streams.
//
// The generator is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Distributions are implemented here rather than taken from
// <random>, because the standard leaves their algorithms to the library
// vendor; this keeps every draw identical across toolchains.
//
// Independent streams are derived by hashing a base seed together with
// string and integer coordinates (SplitMix64 finalizer over FNV-1a), so a
// stream depends only on its coordinates and never on scheduling order.

#include <cstdint>
#include <random>
#include <string_view>

namespace csoeval {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

/// Mixes an extra coordinate into a seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t coordinate);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view coordinate);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, bound), unbiased (rejection). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    /// Standard normal via the Box-Muller transform; caches the second variate.
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Exponential with the given rate.
    double exponential(double rate);

    /// Number of Bernoulli(p) trials up to and including the first success
    /// (support 1, 2, ...; mean 1/p).
    std::uint64_t geometric(double p);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace csoeval
