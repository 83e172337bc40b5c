#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csoeval {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

/// In-memory marker for a missing cell. NaN never occurs as a reading: every
/// ingestion path rejects non-finite values, so the two cannot be confused.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

enum class Role { target, past_covariate, future_covariate, imputation_indicator };

std::string_view role_name(Role role);
Role parse_role(std::string_view text);

struct ChannelSpec {
    std::string name;
    Role role = Role::past_covariate;
    std::string unit;
    /// For imputation indicators: the data channel they flag.
    std::string source;

    bool operator==(const ChannelSpec&) const = default;
};

/// Suffix of the indicator channel created for a data channel.
inline constexpr std::string_view kImputedSuffix = "__imputed";
/// Suffix of the shifted-target placeholder used by local models.
inline constexpr std::string_view kPlaceholderSuffix = "__placeholder";

/// Uniformly sampled multichannel table. Timestamps are implicit:
/// time(i) = start_time + i * step. Values are stored per channel.
///
/// Immutable after construction; the with_* members return modified copies.
class TimeSeriesFrame {
public:
    TimeSeriesFrame() = default;

    /// Validates channel names, roles and indicator contents.
    TimeSeriesFrame(Timestamp start, Seconds step, std::vector<ChannelSpec> channels,
                    std::vector<std::vector<double>> columns);

    Timestamp start_time() const { return start_; }
    Seconds step() const { return step_; }
    std::size_t length() const { return length_; }
    std::size_t channel_count() const { return channels_.size(); }
    Timestamp time(std::size_t i) const { return start_ + step_ * static_cast<long long>(i); }
    /// Timestamp of the last row. Requires length() > 0.
    Timestamp end_time() const { return time(length_ - 1); }

    const std::vector<ChannelSpec>& channels() const { return channels_; }
    const ChannelSpec& channel(std::size_t c) const { return channels_.at(c); }

    std::optional<std::size_t> find(std::string_view name) const;
    /// Throws Error(no_such_channel).
    std::size_t index_of(std::string_view name) const;
    /// Throws Error(no_such_channel) unless exactly one target channel exists.
    std::size_t target_index() const;

    std::span<const double> column(std::size_t c) const { return columns_.at(c); }
    std::span<const double> column(std::string_view name) const { return column(index_of(name)); }
    double at(std::size_t t, std::size_t c) const { return columns_[c][t]; }

    TimeSeriesFrame with_column(std::size_t c, std::vector<double> values) const;
    TimeSeriesFrame with_appended(ChannelSpec spec, std::vector<double> values) const;
    TimeSeriesFrame with_roles(const std::vector<ChannelSpec>& specs) const;
    /// Rows [begin, end).
    TimeSeriesFrame rows(std::size_t begin, std::size_t end) const;
    /// Keeps only the named channels, in the given order.
    TimeSeriesFrame select(const std::vector<std::string>& names) const;

    bool operator==(const TimeSeriesFrame& other) const;

private:
    void validate() const;

    Timestamp start_{};
    Seconds step_{3600};
    std::size_t length_ = 0;
    std::vector<ChannelSpec> channels_;
    std::vector<std::vector<double>> columns_;
};

/// Chronological split. Rows with time < train_end are training, rows with
/// train_end <= time < val_end validation, the rest test.
struct ChronoSplit {
    Timestamp train_end;
    Timestamp val_end;
};

struct Segments {
    TimeSeriesFrame train;
    TimeSeriesFrame val;
    TimeSeriesFrame test;
};

// ---- timestamps -----------------------------------------------------------

/// Parses "YYYY-MM-DDTHH:MM:SSZ" (a trailing "Z" or "+00:00" is accepted, as
/// is a date alone). Throws Error(parse).
Timestamp parse_timestamp(std::string_view text);
/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_timestamp(Timestamp t);

// ---- preprocessing --------------------------------------------------------

struct Event {
    Timestamp time;
    std::string channel;
    double value;
};

/// Buckets events to their nearest full hour (events exactly on the half hour
/// go to the later hour) and averages each bucket. Hours without events are
/// missing. Channels are ordered as in `specs` when given, otherwise by name;
/// channels without a spec become past covariates.
TimeSeriesFrame resample_hourly(std::span<const Event> events,
                                const std::vector<ChannelSpec>& specs = {});

/// Linear interpolation of interior gaps, nearest-value extension at the ends.
/// Appends (or updates) a "<name>__imputed" indicator for every channel.
TimeSeriesFrame interpolate_missing(const TimeSeriesFrame& frame,
                                    const std::vector<std::string>& channels);

Segments split(const TimeSeriesFrame& frame, const ChronoSplit& bounds);

/// Appends the future covariate "<target>__placeholder" with
/// p(t) = target(t - horizon); the first `horizon` cells take p(horizon).
TimeSeriesFrame make_placeholder_future(const TimeSeriesFrame& frame, std::size_t horizon);

std::string placeholder_name(const TimeSeriesFrame& frame);

}  // namespace csoeval
