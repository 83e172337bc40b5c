#include <algorithm>

#include "csoeval/error.hpp"
#include "csoeval/forecast.hpp"

namespace csoeval {

std::string_view mode_name(Mode mode) { return mode == Mode::local ? "local" : "global"; }

Mode parse_mode(std::string_view text) {
    if (text == "global") return Mode::global;
    if (text == "local") return Mode::local;
    throw Error(ErrorCode::parse, "unknown mode '" + std::string(text) + "'");
}

Layout layout_for(const TimeSeriesFrame& frame, const ForecastTask& task) {
    if (task.input_len == 0 || task.horizon == 0)
        throw Error(ErrorCode::invalid_argument, "input_len and horizon must be >= 1");
    Layout layout;
    layout.input_len = task.input_len;
    layout.horizon = task.horizon;
    layout.mode = task.mode;
    const std::size_t target = frame.target_index();
    const std::string& target_name = frame.channel(target).name;
    const std::string placeholder = target_name + std::string(kPlaceholderSuffix);

    if (task.mode == Mode::local) {
        // Target history (and its imputation flag), placeholder as the only
        // future covariate.
        layout.input_channels.push_back(target_name);
        const std::string flag = target_name + std::string(kImputedSuffix);
        if (frame.find(flag)) layout.input_channels.push_back(flag);
        layout.future_channels.push_back(placeholder);
        layout.target_feature = 0;
        return layout;
    }
    for (const auto& spec : frame.channels()) {
        if (spec.name == placeholder) continue;
        if (spec.role == Role::target) layout.target_feature = layout.input_channels.size();
        layout.input_channels.push_back(spec.name);
        if (spec.role == Role::future_covariate) layout.future_channels.push_back(spec.name);
    }
    return layout;
}

WindowSet WindowSet::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > count) throw Error(ErrorCode::invalid_argument, "window range");
    WindowSet out;
    out.layout = layout;
    out.count = end - begin;
    const auto copy = [&](const auto& src, auto& dst, std::size_t stride) {
        dst.assign(src.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                   src.begin() + static_cast<std::ptrdiff_t>(end * stride));
    };
    copy(inputs, out.inputs, input_stride());
    copy(input_missing, out.input_missing, input_stride());
    copy(future, out.future, future_stride());
    copy(targets, out.targets, layout.horizon);
    copy(origins, out.origins, 1);
    return out;
}

WindowSet build_windows(const TimeSeriesFrame& source, const ForecastTask& task, const TimeSeriesFrame* truth) {
    TimeSeriesFrame frame = source;
    if (task.mode == Mode::local && !frame.find(placeholder_name(frame)))
        frame = make_placeholder_future(frame, task.horizon);
    if (truth && (truth->length() != frame.length() || truth->start_time() != frame.start_time()))
        throw Error(ErrorCode::schema_mismatch, "truth frame geometry differs");

    WindowSet ws;
    ws.layout = layout_for(frame, task);
    const Layout& L = ws.layout;
    const std::size_t n = frame.length();
    if (n < task.input_len + task.horizon)
        throw Error(ErrorCode::insufficient_history,
                    std::to_string(n) + " rows < " + std::to_string(task.input_len + task.horizon));

    const std::size_t nf = L.input_features();
    const std::size_t nff = L.future_features();
    std::vector<std::span<const double>> in_cols;
    for (const auto& name : L.input_channels) in_cols.push_back(frame.column(name));
    std::vector<std::span<const double>> fut_cols;
    for (const auto& name : L.future_channels) fut_cols.push_back(frame.column(name));
    // Feature index of the imputation flag for each input feature, if any.
    std::vector<std::ptrdiff_t> flag_of(nf, -1);
    for (std::size_t f = 0; f < nf; ++f) {
        const std::string flag = L.input_channels[f] + std::string(kImputedSuffix);
        const auto it = std::find(L.input_channels.begin(), L.input_channels.end(), flag);
        if (it != L.input_channels.end()) flag_of[f] = it - L.input_channels.begin();
    }
    const auto target_col = (truth ? *truth : frame).column(frame.channel(frame.target_index()).name);

    const std::size_t candidates = n - task.input_len - task.horizon + 1;
    ws.inputs.reserve(candidates * task.input_len * nf);
    for (std::size_t k = 0; k < candidates; ++k) {
        const std::size_t origin = k + task.input_len - 1;
        bool complete = true;
        for (std::size_t s = 0; s < task.horizon && complete; ++s)
            complete = !is_missing(target_col[origin + 1 + s]);
        if (!complete) continue;

        const std::size_t base = ws.inputs.size();
        for (std::size_t l = 0; l < task.input_len; ++l) {
            const std::size_t t = k + l;
            for (std::size_t f = 0; f < nf; ++f) {
                const double v = in_cols[f][t];
                ws.inputs.push_back(is_missing(v) ? 0.0 : v);
                ws.input_missing.push_back(is_missing(v) ? 1 : 0);
            }
            for (std::size_t f = 0; f < nf; ++f)
                if (ws.input_missing[base + l * nf + f] && flag_of[f] >= 0)
                    ws.inputs[base + l * nf + static_cast<std::size_t>(flag_of[f])] = 1.0;
        }
        for (std::size_t s = 0; s < task.horizon; ++s)
            for (std::size_t f = 0; f < nff; ++f) {
                const double v = fut_cols[f][origin + 1 + s];
                ws.future.push_back(is_missing(v) ? 0.0 : v);
            }
        for (std::size_t s = 0; s < task.horizon; ++s) ws.targets.push_back(target_col[origin + 1 + s]);
        ws.origins.push_back(origin);
        ++ws.count;
    }
    return ws;
}

}  // namespace csoeval
