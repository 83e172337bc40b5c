#include <algorithm>
#include <cmath>
#include <limits>

#include "csoeval/error.hpp"
#include "csoeval/evaluate.hpp"

namespace csoeval {

namespace {

double iqr_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.5);
}

std::map<std::string, std::vector<double>> clean_mse_by_model(std::span<const EvalRecord> records) {
    std::map<std::string, std::vector<double>> by_model;
    for (const auto& r : records)
        if (r.clean() && r.ok) by_model[r.model_type].push_back(r.mse);
    return by_model;
}

double safe_ratio(double v, double max) { return max > 0.0 ? v / max : 0.0; }

}  // namespace

std::map<std::string, Consistency> consistency(std::span<const EvalRecord> records) {
    std::map<std::string, Consistency> out;
    for (auto& [model, values] : clean_mse_by_model(records)) {
        if (values.size() < 2) throw Error(ErrorCode::insufficient_trials, model);
        out[model] = {median_of(values), iqr_of(values), values.size()};
    }
    return out;
}

std::map<std::string, double> local_robustness(std::span<const EvalRecord> records) {
    for (const auto& r : records)
        if (r.mode != Mode::local) throw Error(ErrorCode::mode_mismatch, r.model_type + " is a global model");
    std::map<std::string, double> out;
    for (const auto& [model, c] : consistency(records)) out[model] = c.iqr_mse;
    return out;
}

std::vector<double> cci(std::span<const CciInput> models) {
    if (models.empty()) throw Error(ErrorCode::invalid_measurement, "no models");
    double max_t = 0.0, max_s = 0.0;
    for (const auto& m : models) {
        if (!(m.inference_seconds > 0.0) || !(m.size_bytes > 0.0) || !std::isfinite(m.inference_seconds) ||
            !std::isfinite(m.size_bytes))
            throw Error(ErrorCode::invalid_measurement);
        max_t = std::max(max_t, m.inference_seconds);
        max_s = std::max(max_s, m.size_bytes);
    }
    std::vector<double> out;
    for (const auto& m : models) out.push_back(0.5 * (m.inference_seconds / max_t + m.size_bytes / max_s));
    return out;
}

std::vector<double> ri(std::span<const RiInput> models) {
    double max_iqr = 0.0, max_pert = 0.0, max_iqr_pert = 0.0;
    for (const auto& m : models) {
        if (!(m.iqr_clean >= 0.0 && m.mean_abs_increase >= 0.0 && m.iqr_abs_increase >= 0.0))
            throw Error(ErrorCode::invalid_measurement, "robustness components must be non-negative");
        max_iqr = std::max(max_iqr, m.iqr_clean);
        max_pert = std::max(max_pert, m.mean_abs_increase);
        max_iqr_pert = std::max(max_iqr_pert, m.iqr_abs_increase);
    }
    std::vector<double> out;
    for (const auto& m : models)
        out.push_back((safe_ratio(m.iqr_clean, max_iqr) + safe_ratio(m.mean_abs_increase, max_pert) +
                       safe_ratio(m.iqr_abs_increase, max_iqr_pert)) /
                      3.0);
    return out;
}

std::map<std::string, RiInput> ri_components(std::span<const EvalRecord> records) {
    std::map<std::pair<std::string, std::size_t>, double> clean;
    for (const auto& r : records)
        if (r.clean() && r.ok) clean[{r.model_type, r.trial}] = r.mse;

    std::map<std::string, std::vector<double>> increases;
    for (const auto& r : records) {
        if (r.clean() || !r.ok) continue;
        const auto it = clean.find({r.model_type, r.trial});
        if (it == clean.end()) continue;
        increases[r.model_type].push_back(std::abs(r.mse - it->second));
    }
    std::map<std::string, RiInput> out;
    for (auto& [model, values] : clean_mse_by_model(records)) {
        RiInput in;
        in.iqr_clean = values.size() >= 2 ? iqr_of(values) : 0.0;
        if (const auto it = increases.find(model); it != increases.end() && !it->second.empty()) {
            const auto& inc = it->second;
            double sum = 0.0;
            for (double v : inc) sum += v;
            in.mean_abs_increase = sum / static_cast<double>(inc.size());
            in.iqr_abs_increase = iqr_of(inc);
        }
        out[model] = in;
    }
    return out;
}

std::vector<TradeoffIndices> tradeoff_indices(std::span<const EvalRecord> records,
                                              const std::map<std::string, CciInput>& complexity) {
    std::vector<TradeoffIndices> rows;
    std::map<std::string, std::size_t> row_of;
    std::map<std::string, std::vector<double>> peak;
    for (const auto& r : records) {
        if (!row_of.contains(r.model_type)) {
            row_of[r.model_type] = rows.size();
            rows.push_back({});
            rows.back().model_type = r.model_type;
            rows.back().mode = r.mode;
        }
        if (r.clean() && r.ok && std::isfinite(r.mse_peak)) peak[r.model_type].push_back(r.mse_peak);
    }
    const auto cons = consistency(records);
    const auto comps = ri_components(records);
    std::vector<RiInput> ri_in;
    std::vector<CciInput> cci_in;
    for (auto& row : rows) {
        const auto c = cons.find(row.model_type);
        if (c == cons.end()) throw Error(ErrorCode::insufficient_trials, row.model_type + " has no clean record");
        row.median_mse = c->second.median_mse;
        row.iqr_mse = c->second.iqr_mse;
        row.trials = c->second.trials;
        row.median_mse_peak = peak.contains(row.model_type) ? median_of(peak[row.model_type])
                                                            : std::numeric_limits<double>::quiet_NaN();
        row.robustness = comps.at(row.model_type);
        if (row.mode == Mode::global) ri_in.push_back(row.robustness);
        if (const auto it = complexity.find(row.model_type); it != complexity.end()) {
            row.complexity = it->second;
            cci_in.push_back(it->second);
        }
    }
    const auto ri_values = ri(ri_in);
    const auto cci_values = cci_in.empty() ? std::vector<double>{} : cci(cci_in);
    std::size_t j = 0, k = 0;
    for (auto& row : rows) {
        if (row.mode == Mode::global) row.ri = ri_values[j++];
        if (row.complexity) row.cci = cci_values[k++];
    }
    return rows;
}

}  // namespace csoeval
