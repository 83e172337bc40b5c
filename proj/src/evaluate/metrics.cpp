#include <algorithm>
#include <cmath>

#include "csoeval/error.hpp"
#include "csoeval/evaluate.hpp"
#include "csoeval/kernels.hpp"

namespace csoeval {

std::size_t PeakMask::count() const {
    return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), std::uint8_t{1}));
}

std::vector<double> centered_rolling_mean(std::span<const double> x, std::size_t window) {
    if (window == 0) throw Error(ErrorCode::invalid_argument, "window must be >= 1");
    const std::size_t n = x.size();
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    std::vector<double> out(n);
    const std::size_t left = window / 2;
    const std::size_t right = (window - 1) / 2;
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t lo = t >= left ? t - left : 0;
        const std::size_t hi = std::min(n - 1, t + right);
        out[t] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    }
    return out;
}

PeakMask peak_mask(std::span<const double> target, const PeakOptions& opts) {
    if (opts.window == 0) throw Error(ErrorCode::invalid_argument, "window must be >= 1");
    if (!(opts.top_fraction > 0.0 && opts.top_fraction <= 1.0))
        throw Error(ErrorCode::invalid_argument, "top_fraction must lie in (0, 1]");
    if (target.size() <= opts.window + 1)
        throw Error(ErrorCode::insufficient_history, "series shorter than peak window + 2");
    for (double v : target)
        if (is_missing(v)) throw Error(ErrorCode::invalid_reading, "peak extraction needs a complete target");

    const std::size_t n = target.size();
    std::vector<double> diffs(n - 1);
    for (std::size_t t = 1; t < n; ++t) {
        const double d = target[t] - target[t - 1];
        diffs[t - 1] = opts.absolute ? std::abs(d) : d;
    }
    const auto smooth = centered_rolling_mean(diffs, opts.window);

    PeakMask mask;
    mask.window = opts.window;
    mask.top_fraction = opts.top_fraction;
    mask.valid = n - 1;
    mask.selected.assign(n, 0);
    const auto [lo, hi] = std::minmax_element(smooth.begin(), smooth.end());
    if (*lo == *hi) throw Error(ErrorCode::no_peaks, "smoothed differences are constant");
    if (opts.top_fraction >= 1.0) {
        std::fill(mask.selected.begin() + 1, mask.selected.end(), std::uint8_t{1});
        return mask;
    }
    auto sorted = smooth;
    std::sort(sorted.begin(), sorted.end());
    const double threshold = quantile_sorted(sorted, 1.0 - opts.top_fraction);
    for (std::size_t i = 0; i < smooth.size(); ++i)
        if (smooth[i] > threshold) mask.selected[i + 1] = 1;
    if (mask.count() == 0) throw Error(ErrorCode::no_peaks);
    return mask;
}

double mse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw Error(ErrorCode::schema_mismatch, "prediction/truth shapes differ");
    if (pred.empty()) throw Error(ErrorCode::empty_evaluation_set);
    return kernels::sum_sq_diff(pred, truth) / static_cast<double>(pred.size());
}

double mse(std::span<const double> pred, std::span<const double> truth, std::span<const std::size_t> origins,
           std::size_t horizon, const PeakMask& mask) {
    if (pred.size() != truth.size() || pred.size() != origins.size() * horizon)
        throw Error(ErrorCode::schema_mismatch, "prediction/truth shapes differ");
    double acc = 0.0;
    std::size_t cells = 0;
    for (std::size_t w = 0; w < origins.size(); ++w)
        for (std::size_t s = 0; s < horizon; ++s) {
            const std::size_t t = origins[w] + 1 + s;
            if (t >= mask.selected.size() || !mask.selected[t]) continue;
            const double e = pred[w * horizon + s] - truth[w * horizon + s];
            acc += e * e;
            ++cells;
        }
    if (cells == 0) throw Error(ErrorCode::empty_evaluation_set);
    return acc / static_cast<double>(cells);
}

}  // namespace csoeval
