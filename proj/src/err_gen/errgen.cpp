#include "csoeval/errgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "csoeval/error.hpp"
#include "csoeval/rng.hpp"

namespace csoeval {

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw Error(ErrorCode::degenerate_distribution, "empty sample");
    const double h = static_cast<double>(sorted.size() - 1) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

namespace {

std::vector<double> observed(std::span<const double> values) {
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values)
        if (!is_missing(v)) out.push_back(v);
    return out;
}

// Quantile by selection: the two neighbouring order statistics are found with
// nth_element instead of a full sort.
double select_quantile(std::vector<double>& v, double p) {
    const double h = static_cast<double>(v.size() - 1) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    auto nth = v.begin() + static_cast<std::ptrdiff_t>(lo);
    std::nth_element(v.begin(), nth, v.end());
    const double a = *nth;
    if (lo + 1 >= v.size()) return a;
    const double b = *std::min_element(nth + 1, v.end());
    return a + (h - static_cast<double>(lo)) * (b - a);
}

}  // namespace

double quantile(std::span<const double> values, double p) {
    auto v = observed(values);
    if (v.empty()) throw Error(ErrorCode::degenerate_distribution, "no observations");
    return select_quantile(v, p);
}

FenceStats fence_stats(std::span<const double> values) {
    auto v = observed(values);
    if (v.size() < 4) throw Error(ErrorCode::degenerate_distribution, "fewer than 4 observations");
    FenceStats s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.q1 = select_quantile(v, 0.25);
    s.q3 = select_quantile(v, 0.75);
    s.iqr = s.q3 - s.q1;
    s.lower_fence = s.q1 - 1.5 * s.iqr;
    s.upper_fence = s.q3 + 1.5 * s.iqr;
    return s;
}

FenceStats fence_stats(const TimeSeriesFrame& frame, std::string_view channel) {
    return fence_stats(frame.column(channel));
}

std::string_view kind_name(const ErrorKind& kind) {
    struct Visitor {
        std::string_view operator()(const OutlierError&) const { return "outlier"; }
        std::string_view operator()(const MissingError&) const { return "missing"; }
        std::string_view operator()(const ClipError&) const { return "clip"; }
    };
    return std::visit(Visitor{}, kind);
}

void validate(const ErrorSpec& spec) {
    if (!(spec.rate >= 0.0 && spec.rate <= 1.0)) throw Error(ErrorCode::invalid_argument, "rate must lie in [0,1]");
    if (spec.cluster_mean_len == 0) throw Error(ErrorCode::invalid_argument, "cluster_mean_len must be >= 1");
    if (const auto* o = std::get_if<OutlierError>(&spec.kind); o && !(o->beta >= 0.0))
        throw Error(ErrorCode::invalid_argument, "beta must be >= 0");
    if (const auto* c = std::get_if<ClipError>(&spec.kind);
        c && !(c->q_lower >= 0.0 && c->q_lower < c->q_upper && c->q_upper <= 1.0))
        throw Error(ErrorCode::invalid_argument, "clip quantiles must satisfy 0 <= lower < upper <= 1");
}

std::vector<std::size_t> sample_clusters(std::size_t n, double rate, std::size_t cluster_mean_len,
                                         std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw Error(ErrorCode::invalid_argument, "rate must lie in [0,1]");
    const auto k = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(rate * static_cast<double>(n))));
    std::vector<std::size_t> out;
    if (k == 0) return out;
    out.reserve(k);
    if (k == n) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(i);
        return out;
    }

    Rng rng(seed);
    const double p = 1.0 / static_cast<double>(std::max<std::size_t>(cluster_mean_len, 1));
    std::vector<std::size_t> lengths;
    std::size_t total = 0;
    while (total < k) {
        const std::size_t len = std::min<std::size_t>(rng.geometric(p), k - total);
        lengths.push_back(len);
        total += len;
    }
    for (std::size_t i = lengths.size(); i > 1; --i) std::swap(lengths[i - 1], lengths[rng.below(i)]);

    // Interleave m runs with n - k free cells: choose m of the n - k + m slots
    // uniformly (Floyd's algorithm), slot j holds run j in order.
    const std::size_t m = lengths.size();
    const std::size_t slots = n - k + m;
    std::vector<char> taken(slots, 0);
    for (std::size_t j = slots - m; j < slots; ++j) {
        const std::size_t t = rng.below(j + 1);
        taken[taken[t] ? j : t] = 1;
    }
    std::size_t run = 0;
    std::size_t consumed = 0;
    for (std::size_t s = 0; s < slots; ++s) {
        if (!taken[s]) continue;
        const std::size_t start = (s - run) + consumed;
        for (std::size_t i = 0; i < lengths[run]; ++i) out.push_back(start + i);
        consumed += lengths[run];
        ++run;
    }
    return out;
}

std::uint64_t stream_seed(const ErrorSpec& spec, std::string_view channel) {
    return derive_seed(derive_seed(spec.seed, channel), kind_name(spec.kind));
}

namespace {

Perturbed start(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec) {
    validate(spec);
    const std::size_t c = frame.index_of(channel);
    Perturbed out{frame, {}};
    out.mask.channel = frame.channel(c).name;
    out.mask.length = frame.length();
    out.mask.indices = sample_clusters(frame.length(), spec.rate, spec.cluster_mean_len, stream_seed(spec, channel));
    return out;
}

}  // namespace

Perturbed apply_outliers(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec,
                         const FenceStats& stats) {
    const auto* params = std::get_if<OutlierError>(&spec.kind);
    if (!params) throw Error(ErrorCode::invalid_argument, "spec is not an outlier spec");
    Perturbed out = start(frame, channel, spec);
    if (out.mask.indices.empty()) return out;
    if (!(stats.iqr > 0.0)) throw Error(ErrorCode::degenerate_distribution, "iqr is zero");

    const std::size_t c = frame.index_of(channel);
    std::vector<double> values(frame.column(c).begin(), frame.column(c).end());
    Rng noise(derive_seed(stream_seed(spec, channel), "noise"));
    const double down = params->alpha * (stats.mean - stats.lower_fence);
    const double up = params->alpha * (stats.upper_fence - stats.mean);
    const double sd = params->beta * stats.iqr;
    for (std::size_t i : out.mask.indices) {
        const double x = values[i];
        const double eps = sd > 0.0 ? noise.normal(0.0, sd) : 0.0;
        if (is_missing(x)) continue;
        values[i] = (x < stats.mean ? x - down : x + up) + eps;
        out.mask.effective_indices.push_back(i);
    }
    out.frame = frame.with_column(c, std::move(values));
    return out;
}

Perturbed apply_missing(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec) {
    if (!std::holds_alternative<MissingError>(spec.kind))
        throw Error(ErrorCode::invalid_argument, "spec is not a missing-value spec");
    Perturbed out = start(frame, channel, spec);
    if (out.mask.indices.empty()) return out;
    const std::size_t c = frame.index_of(channel);
    std::vector<double> values(frame.column(c).begin(), frame.column(c).end());
    for (std::size_t i : out.mask.indices) values[i] = kMissing;
    out.mask.effective_indices = out.mask.indices;
    out.frame = frame.with_column(c, std::move(values));
    return out;
}

Perturbed apply_clipping(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec,
                         std::span<const double> reference) {
    const auto* params = std::get_if<ClipError>(&spec.kind);
    if (!params) throw Error(ErrorCode::invalid_argument, "spec is not a clipping spec");
    Perturbed out = start(frame, channel, spec);
    if (out.mask.indices.empty()) return out;
    const std::size_t c = frame.index_of(channel);
    const auto source = reference.empty() ? frame.column(c) : reference;
    auto sorted = observed(source);
    if (sorted.empty()) throw Error(ErrorCode::degenerate_distribution, "no observations");
    std::sort(sorted.begin(), sorted.end());
    const double lo = quantile_sorted(sorted, params->q_lower);
    const double hi = quantile_sorted(sorted, params->q_upper);

    std::vector<double> values(frame.column(c).begin(), frame.column(c).end());
    for (std::size_t i : out.mask.indices) {
        const double x = values[i];
        if (is_missing(x)) continue;
        if (x < lo) values[i] = lo;
        else if (x > hi) values[i] = hi;
        else continue;
        out.mask.effective_indices.push_back(i);
    }
    out.frame = frame.with_column(c, std::move(values));
    return out;
}

Perturbed perturb(const TimeSeriesFrame& frame, std::string_view channel, const ErrorSpec& spec,
                  const TimeSeriesFrame* reference) {
    frame.index_of(channel);
    const auto ref = reference ? reference->column(channel) : frame.column(channel);
    struct Visitor {
        const TimeSeriesFrame& frame;
        std::string_view channel;
        const ErrorSpec& spec;
        std::span<const double> ref;
        Perturbed operator()(const OutlierError&) const {
            // Fences only matter when something is sampled.
            if (std::llround(spec.rate * static_cast<double>(frame.length())) == 0)
                return apply_outliers(frame, channel, spec, FenceStats{});
            return apply_outliers(frame, channel, spec, fence_stats(ref));
        }
        Perturbed operator()(const MissingError&) const { return apply_missing(frame, channel, spec); }
        Perturbed operator()(const ClipError&) const { return apply_clipping(frame, channel, spec, ref); }
    };
    return std::visit(Visitor{frame, channel, spec, ref}, spec.kind);
}

void write_mask_csv(std::ostream& out, std::span<const ErrorMask> masks) {
    out << "channel,index,effective\n";
    for (const auto& mask : masks) {
        std::size_t e = 0;
        for (std::size_t i : mask.indices) {
            while (e < mask.effective_indices.size() && mask.effective_indices[e] < i) ++e;
            const bool hit = e < mask.effective_indices.size() && mask.effective_indices[e] == i;
            out << mask.channel << ',' << i << ',' << (hit ? 1 : 0) << '\n';
        }
    }
}

}  // namespace csoeval
