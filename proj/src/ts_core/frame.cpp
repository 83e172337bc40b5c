#include "csoeval/frame.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>

#include "csoeval/error.hpp"

namespace csoeval {

std::string_view role_name(Role role) {
    switch (role) {
        case Role::target: return "target";
        case Role::past_covariate: return "past_covariate";
        case Role::future_covariate: return "future_covariate";
        case Role::imputation_indicator: return "imputation_indicator";
    }
    return "past_covariate";
}

Role parse_role(std::string_view text) {
    if (text == "target") return Role::target;
    if (text == "past_covariate") return Role::past_covariate;
    if (text == "future_covariate") return Role::future_covariate;
    if (text == "imputation_indicator") return Role::imputation_indicator;
    throw Error(ErrorCode::parse, "unknown role '" + std::string(text) + "'");
}

TimeSeriesFrame::TimeSeriesFrame(Timestamp start, Seconds step, std::vector<ChannelSpec> channels,
                                 std::vector<std::vector<double>> columns)
    : start_(start), step_(step), channels_(std::move(channels)), columns_(std::move(columns)) {
    length_ = columns_.empty() ? 0 : columns_.front().size();
    validate();
}

void TimeSeriesFrame::validate() const {
    if (step_.count() <= 0) throw Error(ErrorCode::invalid_argument, "step must be positive");
    if (channels_.size() != columns_.size())
        throw Error(ErrorCode::invalid_argument, "channel/column count differ");
    std::set<std::string_view> names;
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        const auto& spec = channels_[c];
        if (spec.name.empty()) throw Error(ErrorCode::invalid_argument, "empty channel name");
        if (!names.insert(spec.name).second)
            throw Error(ErrorCode::invalid_argument, "duplicate channel '" + spec.name + "'");
        if (columns_[c].size() != length_)
            throw Error(ErrorCode::invalid_argument, "ragged column '" + spec.name + "'");
    }
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        const auto& spec = channels_[c];
        if (spec.role != Role::imputation_indicator) continue;
        const auto src = std::find_if(channels_.begin(), channels_.end(),
                                      [&](const ChannelSpec& s) { return s.name == spec.source; });
        if (src == channels_.end() || src->role == Role::imputation_indicator)
            throw Error(ErrorCode::invalid_argument,
                        "indicator '" + spec.name + "' must reference one data channel");
        for (double v : columns_[c])
            if (v != 0.0 && v != 1.0)
                throw Error(ErrorCode::invalid_argument,
                            "indicator '" + spec.name + "' holds values other than 0/1");
    }
}

std::optional<std::size_t> TimeSeriesFrame::find(std::string_view name) const {
    for (std::size_t c = 0; c < channels_.size(); ++c)
        if (channels_[c].name == name) return c;
    return std::nullopt;
}

std::size_t TimeSeriesFrame::index_of(std::string_view name) const {
    if (auto c = find(name)) return *c;
    throw Error(ErrorCode::no_such_channel, std::string(name));
}

std::size_t TimeSeriesFrame::target_index() const {
    std::optional<std::size_t> found;
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        if (channels_[c].role != Role::target) continue;
        if (found) throw Error(ErrorCode::invalid_argument, "more than one target channel");
        found = c;
    }
    if (!found) throw Error(ErrorCode::no_such_channel, "no target channel");
    return *found;
}

TimeSeriesFrame TimeSeriesFrame::with_column(std::size_t c, std::vector<double> values) const {
    TimeSeriesFrame out = *this;
    out.columns_.at(c) = std::move(values);
    out.validate();
    return out;
}

TimeSeriesFrame TimeSeriesFrame::with_appended(ChannelSpec spec, std::vector<double> values) const {
    TimeSeriesFrame out = *this;
    if (out.channels_.empty()) out.length_ = values.size();
    out.channels_.push_back(std::move(spec));
    out.columns_.push_back(std::move(values));
    out.validate();
    return out;
}

TimeSeriesFrame TimeSeriesFrame::with_roles(const std::vector<ChannelSpec>& specs) const {
    TimeSeriesFrame out = *this;
    for (const auto& spec : specs)
        if (auto c = out.find(spec.name)) out.channels_[*c] = spec;
    out.validate();
    return out;
}

TimeSeriesFrame TimeSeriesFrame::rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > length_) throw Error(ErrorCode::invalid_argument, "row range");
    TimeSeriesFrame out;
    out.start_ = time(begin);
    out.step_ = step_;
    out.length_ = end - begin;
    out.channels_ = channels_;
    out.columns_.reserve(columns_.size());
    for (const auto& col : columns_)
        out.columns_.emplace_back(col.begin() + static_cast<std::ptrdiff_t>(begin),
                                  col.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

TimeSeriesFrame TimeSeriesFrame::select(const std::vector<std::string>& names) const {
    std::vector<ChannelSpec> specs;
    std::vector<std::vector<double>> cols;
    for (const auto& name : names) {
        const std::size_t c = index_of(name);
        specs.push_back(channels_[c]);
        cols.push_back(columns_[c]);
    }
    TimeSeriesFrame out(start_, step_, std::move(specs), std::move(cols));
    out.length_ = length_;
    return out;
}

bool TimeSeriesFrame::operator==(const TimeSeriesFrame& other) const {
    if (start_ != other.start_ || step_ != other.step_ || length_ != other.length_ ||
        channels_ != other.channels_)
        return false;
    for (std::size_t c = 0; c < columns_.size(); ++c)
        for (std::size_t t = 0; t < length_; ++t) {
            const double a = columns_[c][t];
            const double b = other.columns_[c][t];
            if (is_missing(a) != is_missing(b)) return false;
            if (!is_missing(a) && a != b) return false;
        }
    return true;
}

// ---- timestamps -----------------------------------------------------------

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) return false;
    const char* first = text.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, first + len, out);
    return ec == std::errc{} && ptr == first + len;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    const auto fail = [&] { return Error(ErrorCode::parse, "bad timestamp '" + std::string(text) + "'"); };
    if (!read_int(text, 0, 4, y) || text.size() < 10 || text[4] != '-' || text[7] != '-' ||
        !read_int(text, 5, 2, mo) || !read_int(text, 8, 2, d))
        throw fail();
    std::string_view rest = text.substr(10);
    if (!rest.empty()) {
        if ((rest[0] != 'T' && rest[0] != ' ') || rest.size() < 9 || rest[3] != ':' || rest[6] != ':' ||
            !read_int(rest, 1, 2, h) || !read_int(rest, 4, 2, mi) || !read_int(rest, 7, 2, s))
            throw fail();
        rest = rest.substr(9);
        if (!(rest.empty() || rest == "Z" || rest == "+00:00")) throw fail();
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59) throw fail();
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

}  // namespace csoeval
