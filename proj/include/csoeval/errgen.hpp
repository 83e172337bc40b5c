#pragma once

// Parametric sensor-error models and clustered error placement.
//
// Three error kinds corrupt one channel of a frame:
//   outlier  x -> x - alpha (mu - lower_fence) + N(0, beta iqr)   if x <  mu
//               x + alpha (upper_fence - mu) + N(0, beta iqr)     if x >= mu
//   missing  x -> missing
//   clip     x -> clamp(x, Q(q_lower), Q(q_upper))
// Which cells are hit is decided by sample_clusters(): exactly
// round(rate * n) indices laid out as contiguous runs with geometric lengths,
// mimicking sensor downtimes.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "csoeval/frame.hpp"

namespace csoeval {

/// Type-7 quantile (linear interpolation between order statistics,
/// h = (n - 1) p) of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double p);

/// Same rule on an unsorted sample; missing cells are ignored.
/// Throws Error(degenerate_distribution) if no values remain.
double quantile(std::span<const double> values, double p);

struct FenceStats {
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double mean = 0.0;
    double lower_fence = 0.0;
    double upper_fence = 0.0;

    bool outside(double x) const { return x < lower_fence || x > upper_fence; }
};

/// Needs at least four non-missing values.
FenceStats fence_stats(std::span<const double> values);
FenceStats fence_stats(const TimeSeriesFrame& frame, std::string_view channel);

struct OutlierError {
    double alpha = 1.1;
    double beta = 0.1;
};
struct MissingError {};
struct ClipError {
    double q_lower = 0.2;
    double q_upper = 0.8;
};

using ErrorKind = std::variant<OutlierError, MissingError, ClipError>;

std::string_view kind_name(const ErrorKind& kind);

struct ErrorSpec {
    ErrorKind kind = MissingError{};
    double rate = 0.0;
    std::size_t cluster_mean_len = 24;
    std::uint64_t seed = 0;
};

/// Checks rate, clip bounds and beta. Throws Error(invalid_argument).
void validate(const ErrorSpec& spec);

struct ErrorMask {
    std::string channel;
    std::size_t length = 0;
    std::vector<std::size_t> indices;
    std::vector<std::size_t> effective_indices;

    double rate() const { return length == 0 ? 0.0 : double(indices.size()) / double(length); }
    double effective_rate() const {
        return length == 0 ? 0.0 : double(effective_indices.size()) / double(length);
    }
};

struct Perturbed {
    TimeSeriesFrame frame;
    ErrorMask mask;
};

/// Exactly round(rate * n) sorted indices forming contiguous runs.
/// Deterministic in all arguments.
std::vector<std::size_t> sample_clusters(std::size_t n, double rate, std::size_t cluster_mean_len,
                                         std::uint64_t seed);

/// Seed of the stream used for one (channel, kind) corruption.
std::uint64_t stream_seed(const ErrorSpec& spec, std::string_view channel);

Perturbed apply_outliers(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec,
                         const FenceStats& stats);
Perturbed apply_missing(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec);
/// Clip bounds are taken from `reference` (defaults to the channel itself).
Perturbed apply_clipping(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec,
                         std::span<const double> reference = {});

/// Dispatches on spec.kind. Fences and clip bounds come from `reference` when
/// given (e.g. the training segment), otherwise from the perturbed channel.
Perturbed perturb(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec,
                  const TimeSeriesFrame* reference = nullptr);

/// "channel,index,effective" rows, one per targeted cell.
void write_mask_csv(std::ostream& out, std::span<const ErrorMask> masks);

}  // namespace csoeval
