#include "csoeval/errgen.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "csoeval/error.hpp"
#include "csoeval/rng.hpp"

namespace csoeval {
namespace {

TimeSeriesFrame two_channels(std::vector<double> level, std::vector<double> rain) {
    return TimeSeriesFrame(parse_timestamp("2023-01-01"), Seconds{3600},
                           {{"level", Role::target, {}, {}}, {"rain", Role::past_covariate, {}, {}}},
                           {std::move(level), std::move(rain)});
}

TimeSeriesFrame random_frame(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.normal(20, 5);
        b[i] = rng.exponential(0.5);
    }
    return two_channels(a, b);
}

// Sort-based order statistic with h = (n-1) p.
double oracle_quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = double(v.size() - 1) * p;
    const auto lo = std::size_t(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

std::vector<std::pair<std::size_t, std::size_t>> runs_of(const std::vector<std::size_t>& idx) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t i : idx) {
        if (!runs.empty() && runs.back().second == i)
            ++runs.back().second;
        else
            runs.push_back({i, i + 1});
    }
    return runs;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

TEST(Fences, EightValues) {
    const auto s = fence_stats(std::vector<double>{8, 3, 1, 5, 2, 7, 4, 6});
    EXPECT_DOUBLE_EQ(s.q1, 2.75);
    EXPECT_DOUBLE_EQ(s.q3, 6.25);
    EXPECT_DOUBLE_EQ(s.iqr, 3.5);
    EXPECT_DOUBLE_EQ(s.lower_fence, -2.5);
    EXPECT_DOUBLE_EQ(s.upper_fence, 11.5);
    EXPECT_DOUBLE_EQ(s.mean, 4.5);
}

TEST(Fences, ConstantSeries) {
    const auto s = fence_stats(std::vector<double>{5, 5, 5, 5});
    EXPECT_EQ(s.iqr, 0.0);
    EXPECT_EQ(s.lower_fence, 5.0);
    EXPECT_EQ(s.upper_fence, 5.0);
}

TEST(Fences, TooFewValuesAndMissingIgnored) {
    EXPECT_THROW(fence_stats(std::vector<double>{1, 2, kMissing, 3}), Error);
    const auto s = fence_stats(std::vector<double>{kMissing, 1, 2, 3, 4, kMissing, 5, 6, 7, 8});
    EXPECT_DOUBLE_EQ(s.q1, 2.75);
}

TEST(Fences, UniformSampleRarelyOutside) {
    Rng rng(8);
    std::vector<double> v(100000);
    for (auto& x : v) x = rng.uniform();
    const auto s = fence_stats(v);
    const auto outside = std::count_if(v.begin(), v.end(), [&](double x) { return s.outside(x); });
    EXPECT_EQ(outside, 0);
}

TEST(Quantile, MatchesSortOracle) {
    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> v(1 + rng.below(300));
        for (auto& x : v) x = rng.normal(0, 10);
        for (double p : {0.0, 0.1, 0.2, 0.25, 0.5, 0.75, 0.8, 0.99, 1.0})
            EXPECT_NEAR(quantile(v, p), oracle_quantile(v, p), 1e-12);
    }
    EXPECT_THROW(quantile(std::vector<double>{kMissing}, 0.5), Error);
}

TEST(Clusters, Degenerate) {
    EXPECT_TRUE(sample_clusters(100, 0.0, 24, 1).empty());
    const auto all = sample_clusters(100, 1.0, 24, 1);
    ASSERT_EQ(all.size(), 100u);
    EXPECT_EQ(runs_of(all).size(), 1u);
    EXPECT_EQ(all.front(), 0u);
}

TEST(Clusters, ExactCountAndRunDecomposition) {
    for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
        const auto idx = sample_clusters(10000, 0.3, 24, seed);
        ASSERT_EQ(idx.size(), 3000u);
        EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
        EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
        EXPECT_LT(idx.back(), 10000u);
        const auto runs = runs_of(idx);
        std::size_t total = 0;
        for (auto [b, e] : runs) total += e - b;
        EXPECT_EQ(total, 3000u);
        // Mean run length near 24; runs may merge when adjacent, so only a loose band.
        const double mean_len = 3000.0 / double(runs.size());
        EXPECT_GT(mean_len, 15.0);
        EXPECT_LT(mean_len, 45.0);
    }
}

TEST(Clusters, UnitMeanLengthScatters) {
    const auto idx = sample_clusters(10000, 0.1, 1, 5);
    EXPECT_EQ(idx.size(), 1000u);
    EXPECT_GT(runs_of(idx).size(), 800u);
}

TEST(Clusters, Deterministic) {
    EXPECT_EQ(sample_clusters(5000, 0.2, 24, 7), sample_clusters(5000, 0.2, 24, 7));
    EXPECT_NE(sample_clusters(5000, 0.2, 24, 7), sample_clusters(5000, 0.2, 24, 8));
}

TEST(Outliers, ClosedFormShift) {
    const auto f = two_channels({4.0, 5.0}, {0.0, 0.0});
    FenceStats s;
    s.mean = 5;
    s.lower_fence = 0;
    s.upper_fence = 10;
    s.q1 = 2;
    s.q3 = 8;
    s.iqr = 6;
    ErrorSpec spec{OutlierError{1.0, 0.0}, 1.0, 24, 3};
    const auto out = apply_outliers(f, "level", spec, s);
    EXPECT_EQ(out.frame.at(0, 0), -1.0);
    // x = mean takes the upper branch.
    EXPECT_EQ(out.frame.at(1, 0), 10.0);
    EXPECT_EQ(out.mask.effective_indices, (std::vector<std::size_t>{0, 1}));
}

TEST(Outliers, RateZeroIsIdentity) {
    const auto f = random_frame(1, 200);
    const auto out = perturb(f, "level", {OutlierError{}, 0.0, 24, 1});
    EXPECT_EQ(out.frame, f);
    EXPECT_TRUE(out.mask.indices.empty());
}

TEST(Outliers, BetaZeroGuaranteesOutliers) {
    const auto f = random_frame(2, 3000);
    const auto stats = fence_stats(f, "level");
    for (double rate : {0.1, 0.5, 1.0}) {
        const auto out = perturb(f, "level", {OutlierError{1.1, 0.0}, rate, 24, 4});
        ASSERT_EQ(out.mask.indices.size(), std::size_t(std::llround(rate * 3000)));
        for (std::size_t i : out.mask.indices) EXPECT_TRUE(stats.outside(out.frame.at(i, 0))) << i;
    }
}

TEST(Outliers, ZeroIqrRejected) {
    const auto f = two_channels({1, 1, 1, 1, 1, 1}, {0, 1, 2, 3, 4, 5});
    EXPECT_THROW(perturb(f, "level", {OutlierError{}, 0.5, 2, 1}), Error);
}

TEST(Missing, FullAndHalf) {
    const auto f = random_frame(3, 10);
    const auto all = perturb(f, "level", {MissingError{}, 1.0, 24, 1});
    for (double v : all.frame.column("level")) EXPECT_TRUE(is_missing(v));
    const auto half = apply_missing(f, "level", {MissingError{}, 0.5, 3, 1});
    std::size_t missing = 0;
    for (double v : half.frame.column("level")) missing += is_missing(v);
    EXPECT_EQ(missing, 5u);
    EXPECT_EQ(half.mask.effective_indices, half.mask.indices);
    std::size_t run_total = 0;
    for (auto [b, e] : runs_of(half.mask.indices)) run_total += e - b;
    EXPECT_EQ(run_total, 5u);
    const auto rain = half.frame.column("rain");
    const auto rain0 = f.column("rain");
    for (std::size_t i = 0; i < 10; ++i) EXPECT_TRUE(bit_equal(rain[i], rain0[i]));
}

TEST(Clip, TenValuesOrderStatisticBounds) {
    std::vector<double> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto f = two_channels(v, v);
    const auto out = apply_clipping(f, "level", {ClipError{0.2, 0.8}, 1.0, 24, 1});
    const double lo = oracle_quantile(v, 0.2), hi = oracle_quantile(v, 0.8);
    EXPECT_DOUBLE_EQ(lo, 1.8);
    EXPECT_DOUBLE_EQ(hi, 7.2);
    const auto got = out.frame.column("level");
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(got[i], std::clamp(v[i], lo, hi));
    EXPECT_EQ(out.mask.effective_indices, (std::vector<std::size_t>{0, 1, 8, 9}));
    EXPECT_DOUBLE_EQ(out.mask.effective_rate(), 0.4);
}

TEST(Clip, ConstantChannelUnchanged) {
    const auto f = two_channels(std::vector<double>(20, 3.0), std::vector<double>(20, 0.0));
    const auto out = perturb(f, "level", {ClipError{}, 0.6, 4, 1});
    EXPECT_EQ(out.frame, f);
    EXPECT_EQ(out.mask.indices.size(), 12u);
    EXPECT_EQ(out.mask.effective_rate(), 0.0);
}

TEST(Clip, BoundsFromReference) {
    std::vector<double> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto f = two_channels(v, v);
    const std::vector<double> ref{4, 5};
    const auto out = apply_clipping(f, "level", {ClipError{0.0, 1.0}, 1.0, 24, 1}, ref);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(out.frame.at(i, 0), std::clamp(v[i], 4.0, 5.0));
}

TEST(Perturb, DispatchDeterminismIsolation) {
    const auto f = random_frame(4, 500);
    const ErrorSpec spec{MissingError{}, 0.3, 10, 77};
    const auto a = perturb(f, "rain", spec);
    const auto b = apply_missing(f, "rain", spec);
    EXPECT_EQ(a.frame, b.frame);
    EXPECT_EQ(a.mask.indices, b.mask.indices);
    const auto o1 = perturb(f, "level", {OutlierError{}, 0.3, 10, 77});
    const auto o2 = perturb(f, "level", {OutlierError{}, 0.3, 10, 77});
    EXPECT_EQ(o1.frame, o2.frame);
    EXPECT_EQ(o1.mask.channel, "level");
    EXPECT_EQ(a.mask.channel, "rain");
    EXPECT_NE(stream_seed(spec, "level"), stream_seed(spec, "rain"));
    EXPECT_THROW(perturb(f, "nope", spec), Error);
}

TEST(Perturb, InvalidSpecs) {
    const auto f = random_frame(5, 50);
    EXPECT_THROW(perturb(f, "level", {MissingError{}, 1.5, 24, 1}), Error);
    EXPECT_THROW(perturb(f, "level", {ClipError{0.8, 0.2}, 0.5, 24, 1}), Error);
    EXPECT_THROW(perturb(f, "level", {OutlierError{1.1, -0.1}, 0.5, 24, 1}), Error);
}

TEST(Perturb, FencesFromReferenceFrame) {
    const auto f = random_frame(6, 400);
    const auto ref = random_frame(7, 400).with_column(0, std::vector<double>(400, 0.0));
    std::vector<double> ramp(400);
    for (std::size_t i = 0; i < 400; ++i) ramp[i] = double(i);
    const auto ref_frame = ref.with_column(0, ramp);
    const auto out = perturb(f, "level", {OutlierError{1.0, 0.0}, 0.2, 24, 9}, &ref_frame);
    const auto s = fence_stats(ramp);
    for (std::size_t i : out.mask.indices) {
        const double x = f.at(i, 0);
        const double expect = x < s.mean ? x - (s.mean - s.lower_fence) : x + (s.upper_fence - s.mean);
        EXPECT_DOUBLE_EQ(out.frame.at(i, 0), expect);
    }
}

TEST(Mask, CsvRows) {
    ErrorMask m{"level", 10, {2, 3, 4}, {3}};
    std::ostringstream out;
    write_mask_csv(out, std::vector<ErrorMask>{m});
    EXPECT_EQ(out.str(), "channel,index,effective\nlevel,2,0\nlevel,3,1\nlevel,4,0\n");
}

}  // namespace
}  // namespace csoeval
