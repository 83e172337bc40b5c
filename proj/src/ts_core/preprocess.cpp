#include <algorithm>
#include <map>

#include "csoeval/error.hpp"
#include "csoeval/frame.hpp"

namespace csoeval {

namespace {

constexpr long long kHour = 3600;

long long nearest_hour(Timestamp t) {
    const long long s = t.time_since_epoch().count();
    // floor((s + 1800) / 3600) for negative epochs as well.
    const long long shifted = s + kHour / 2;
    return shifted >= 0 ? shifted / kHour : -((-shifted + kHour - 1) / kHour);
}

}  // namespace

TimeSeriesFrame resample_hourly(std::span<const Event> events, const std::vector<ChannelSpec>& specs) {
    if (events.empty()) throw Error(ErrorCode::no_data);

    std::vector<ChannelSpec> channels = specs;
    std::map<std::string, std::size_t, std::less<>> column_of;
    for (std::size_t c = 0; c < channels.size(); ++c) column_of.emplace(channels[c].name, c);
    if (channels.empty()) {
        std::vector<std::string> names;
        for (const auto& e : events) names.push_back(e.channel);
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        for (auto& n : names) {
            column_of.emplace(n, channels.size());
            channels.push_back({n, Role::past_covariate, {}, {}});
        }
    }

    long long first = nearest_hour(events.front().time);
    long long last = first;
    for (const auto& e : events) {
        if (!std::isfinite(e.value)) throw Error(ErrorCode::invalid_reading, e.channel);
        if (!column_of.contains(e.channel)) throw Error(ErrorCode::no_such_channel, e.channel);
        const long long h = nearest_hour(e.time);
        first = std::min(first, h);
        last = std::max(last, h);
    }

    const auto n = static_cast<std::size_t>(last - first + 1);
    std::vector<std::vector<double>> sums(channels.size(), std::vector<double>(n, 0.0));
    std::vector<std::vector<std::size_t>> counts(channels.size(), std::vector<std::size_t>(n, 0));
    for (const auto& e : events) {
        const std::size_t c = column_of.find(e.channel)->second;
        const auto t = static_cast<std::size_t>(nearest_hour(e.time) - first);
        sums[c][t] += e.value;
        ++counts[c][t];
    }
    for (std::size_t c = 0; c < channels.size(); ++c)
        for (std::size_t t = 0; t < n; ++t)
            sums[c][t] = counts[c][t] == 0 ? kMissing : sums[c][t] / static_cast<double>(counts[c][t]);

    return TimeSeriesFrame(Timestamp{Seconds{first * kHour}}, Seconds{kHour}, std::move(channels),
                           std::move(sums));
}

TimeSeriesFrame interpolate_missing(const TimeSeriesFrame& frame, const std::vector<std::string>& channels) {
    TimeSeriesFrame out = frame;
    const std::size_t n = frame.length();
    for (const auto& name : channels) {
        const std::size_t c = frame.index_of(name);
        const auto src = frame.column(c);
        std::vector<std::size_t> observed;
        for (std::size_t t = 0; t < n; ++t)
            if (!is_missing(src[t])) observed.push_back(t);
        if (observed.size() < 2) throw Error(ErrorCode::underdetermined_channel, name);

        std::vector<double> filled(src.begin(), src.end());
        std::vector<double> flag(n, 0.0);
        for (std::size_t t = 0; t < observed.front(); ++t) {
            filled[t] = src[observed.front()];
            flag[t] = 1.0;
        }
        for (std::size_t k = 0; k + 1 < observed.size(); ++k) {
            const std::size_t lo = observed[k];
            const std::size_t hi = observed[k + 1];
            if (hi == lo + 1) continue;
            const double a = src[lo];
            const double slope = (src[hi] - a) / static_cast<double>(hi - lo);
            for (std::size_t t = lo + 1; t < hi; ++t) {
                filled[t] = a + slope * static_cast<double>(t - lo);
                flag[t] = 1.0;
            }
        }
        for (std::size_t t = observed.back() + 1; t < n; ++t) {
            filled[t] = src[observed.back()];
            flag[t] = 1.0;
        }

        out = out.with_column(c, std::move(filled));
        const std::string flag_name = name + std::string(kImputedSuffix);
        if (auto existing = out.find(flag_name)) {
            const auto prev = out.column(*existing);
            for (std::size_t t = 0; t < n; ++t) flag[t] = std::max(flag[t], prev[t]);
            out = out.with_column(*existing, std::move(flag));
        } else {
            out = out.with_appended({flag_name, Role::imputation_indicator, {}, name}, std::move(flag));
        }
    }
    return out;
}

Segments split(const TimeSeriesFrame& frame, const ChronoSplit& bounds) {
    if (frame.length() == 0) throw Error(ErrorCode::split_out_of_range, "empty frame");
    if (!(frame.start_time() < bounds.train_end && bounds.train_end < bounds.val_end &&
          bounds.val_end < frame.end_time()))
        throw Error(ErrorCode::split_out_of_range);
    // First row whose timestamp is >= the boundary.
    const auto row_of = [&](Timestamp boundary) {
        const auto offset = (boundary - frame.start_time()).count();
        const auto step = frame.step().count();
        return static_cast<std::size_t>((offset + step - 1) / step);
    };
    const std::size_t a = row_of(bounds.train_end);
    const std::size_t b = row_of(bounds.val_end);
    return {frame.rows(0, a), frame.rows(a, b), frame.rows(b, frame.length())};
}

std::string placeholder_name(const TimeSeriesFrame& frame) {
    return frame.channel(frame.target_index()).name + std::string(kPlaceholderSuffix);
}

TimeSeriesFrame make_placeholder_future(const TimeSeriesFrame& frame, std::size_t horizon) {
    if (horizon == 0) throw Error(ErrorCode::invalid_argument, "horizon must be >= 1");
    if (horizon >= frame.length()) throw Error(ErrorCode::horizon_too_long);
    const std::size_t target = frame.target_index();
    const auto y = frame.column(target);
    std::vector<double> p(frame.length());
    for (std::size_t t = horizon; t < p.size(); ++t) p[t] = y[t - horizon];
    // Leading cells take the nearest available value.
    std::size_t first = horizon;
    while (first < p.size() && is_missing(p[first])) ++first;
    const double fill = first < p.size() ? p[first] : kMissing;
    for (std::size_t t = 0; t < horizon; ++t) p[t] = fill;
    if (auto existing = frame.find(placeholder_name(frame))) return frame.with_column(*existing, std::move(p));
    const auto& spec = frame.channel(target);
    return frame.with_appended({placeholder_name(frame), Role::future_covariate, spec.unit, {}}, std::move(p));
}

}  // namespace csoeval
