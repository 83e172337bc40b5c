#include "csoeval/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

namespace csoeval {
namespace {

TEST(Rng, EngineMatchesStandardReferenceValue) {
    // The standard fixes the 10000th output of a default-seeded mt19937_64.
    Rng rng(5489u);
    for (int i = 0; i < 9999; ++i) rng.next_u64();
    EXPECT_EQ(rng.next_u64(), 9981545732273789042ULL);
}

TEST(Rng, HashPrimitivesMatchPublishedVectors) {
    EXPECT_EQ(splitmix64(1234567), 6457827717110365317ULL);
    EXPECT_EQ(splitmix64(1234567 + 0x9e3779b97f4a7c15ULL), 3203168211198807973ULL);
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Rng, DerivedSeedsAreStableAndDistinct) {
    EXPECT_EQ(derive_seed(7, "level"), derive_seed(7, fnv1a64("level")));
    std::set<std::uint64_t> seen;
    for (std::uint64_t base = 0; base < 20; ++base)
        for (std::uint64_t c = 0; c < 50; ++c) seen.insert(derive_seed(base, c));
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.uniform(), b.uniform());
        EXPECT_EQ(a.normal(), b.normal());
        EXPECT_EQ(a.geometric(0.1), b.geometric(0.1));
    }
}

TEST(Rng, DistributionMoments) {
    Rng rng(3);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, se = 0, sg = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
        se += rng.exponential(2.0);
        const auto g = rng.geometric(1.0 / 24.0);
        ASSERT_GE(g, 1u);
        sg += double(g);
    }
    EXPECT_NEAR(su / n, 0.5, 0.005);
    EXPECT_NEAR(sn / n, 0.0, 0.01);
    EXPECT_NEAR(sn2 / n, 1.0, 0.015);
    EXPECT_NEAR(se / n, 0.5, 0.005);
    EXPECT_NEAR(sg / n, 24.0, 0.3);
}

TEST(Rng, BelowIsUniformOverItsRange) {
    Rng rng(9);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 500);
    EXPECT_EQ(rng.geometric(1.0), 1u);
}

}  // namespace
}  // namespace csoeval
