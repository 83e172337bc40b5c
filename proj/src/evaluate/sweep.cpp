#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "csoeval/error.hpp"
#include "csoeval/evaluate.hpp"
#include "csoeval/parallel.hpp"
#include "csoeval/rng.hpp"
#include "json.hpp"

namespace csoeval {

using json = nlohmann::json;

std::vector<ErrorKind> default_error_kinds() { return {OutlierError{1.1, 0.1}, MissingError{}, ClipError{0.2, 0.8}}; }

std::vector<double> default_error_rates() { return {0.1, 0.2, 0.3, 0.4, 0.5}; }

namespace {

struct Scored {
    double mse = 0.0;
    double mse_peak = 0.0;
};

Scored score(const ForecasterHandle& h, const WindowSet& ws, const PeakMask& mask) {
    const auto pred = predict(h, ws);
    return {mse(pred, ws.targets), mse(pred, ws.targets, ws.origins, ws.layout.horizon, mask)};
}

TimeSeriesFrame without_placeholder(const TimeSeriesFrame& frame) {
    const std::string name = placeholder_name(frame);
    if (!frame.find(name)) return frame;
    std::vector<std::string> keep;
    for (const auto& spec : frame.channels())
        if (spec.name != name) keep.push_back(spec.name);
    return frame.select(keep);
}

}  // namespace

std::vector<EvalRecord> robustness_sweep(const std::vector<ModelTrials>& models, const TimeSeriesFrame& test_in,
                                         const ForecastTask& task, const SweepConfig& cfg) {
    for (double r : cfg.rates)
        if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::invalid_argument, "rates must lie in [0, 1]");
    const TimeSeriesFrame test = without_placeholder(test_in);
    const std::string target_name = test.channel(test.target_index()).name;
    for (const auto& f : cfg.features) {
        test.index_of(f);
        if (f == target_name + std::string(kImputedSuffix))
            throw Error(ErrorCode::invalid_argument, "the target's imputation indicator cannot be perturbed");
    }
    const PeakMask peaks = peak_mask(test.column(target_name), cfg.peak);

    const std::size_t n_feat = cfg.features.size();
    const std::size_t n_kind = cfg.kinds.size();
    const std::size_t n_rate = cfg.rates.size();
    const std::size_t per_trial = 1 + n_feat * n_kind * n_rate;

    // Record slot of (model, trial) in loop order, and the largest trial count.
    std::vector<std::size_t> model_base(models.size());
    std::size_t total = 0, max_trials = 0;
    for (std::size_t m = 0; m < models.size(); ++m) {
        model_base[m] = total;
        total += models[m].trials.size() * per_trial;
        max_trials = std::max(max_trials, models[m].trials.size());
    }
    std::vector<EvalRecord> records(total);
    const auto stamp = [&](std::size_t m, std::size_t t) {
        EvalRecord r;
        const auto& h = models[m].trials[t];
        r.model_type = models[m].model_type;
        r.mode = h.layout().mode;
        r.seed = h.seed();
        r.trial = t;
        return r;
    };
    const auto task_for = [&](Mode mode) {
        ForecastTask t = task;
        t.mode = mode;
        return t;
    };

    // Clean windows per mode are shared by every trial.
    std::map<Mode, WindowSet> clean;
    for (const auto& mt : models)
        for (const auto& h : mt.trials)
            if (!clean.contains(h.layout().mode)) clean.emplace(h.layout().mode, build_windows(test, task_for(h.layout().mode)));

    // Work item: (trial index, cell) where cell 0 is the clean evaluation and
    // cell 1 + ((f * n_kind) + k) * n_rate + r a perturbation. One perturbation
    // is shared by all model types holding that trial.
    const std::size_t n_items = max_trials * per_trial;
    parallel_for(n_items, cfg.jobs, [&](std::size_t item) {
        const std::size_t t = item / per_trial;
        const std::size_t cell = item % per_trial;
        if (cell == 0) {
            for (std::size_t m = 0; m < models.size(); ++m) {
                if (t >= models[m].trials.size()) continue;
                EvalRecord rec = stamp(m, t);
                try {
                    const auto& h = models[m].trials[t];
                    const Scored s = score(h, clean.at(h.layout().mode), peaks);
                    rec.mse = s.mse;
                    rec.mse_peak = s.mse_peak;
                } catch (const std::exception& e) {
                    rec.ok = false;
                    rec.message = e.what();
                }
                records[model_base[m] + t * per_trial] = std::move(rec);
            }
            return;
        }
        const std::size_t c = cell - 1;
        const std::size_t f = c / (n_kind * n_rate);
        const std::size_t k = (c / n_rate) % n_kind;
        const std::size_t r = c % n_rate;
        const std::string& feature = cfg.features[f];
        ErrorSpec spec;
        spec.kind = cfg.kinds[k];
        spec.rate = cfg.rates[r];
        spec.cluster_mean_len = cfg.cluster_mean_len;
        spec.seed = derive_seed(derive_seed(cfg.seed_base, t), std::bit_cast<std::uint64_t>(spec.rate));

        std::optional<Perturbed> perturbed;
        std::string failure;
        try {
            perturbed = perturb(test, feature, spec, cfg.reference);
        } catch (const std::exception& e) {
            failure = e.what();
        }
        std::map<Mode, WindowSet> windows;
        for (std::size_t m = 0; m < models.size(); ++m) {
            if (t >= models[m].trials.size()) continue;
            EvalRecord rec = stamp(m, t);
            rec.feature = feature;
            rec.error_kind = std::string(kind_name(spec.kind));
            rec.error_rate = spec.rate;
            try {
                if (!perturbed) throw Error(ErrorCode::invalid_argument, failure);
                rec.effective_rate = perturbed->mask.effective_rate();
                const auto& h = models[m].trials[t];
                const Mode mode = h.layout().mode;
                if (!windows.contains(mode))
                    windows.emplace(mode, build_windows(perturbed->frame, task_for(mode), &test));
                const Scored s = score(h, windows.at(mode), peaks);
                rec.mse = s.mse;
                rec.mse_peak = s.mse_peak;
            } catch (const std::exception& e) {
                rec.ok = false;
                rec.mse = rec.mse_peak = std::numeric_limits<double>::quiet_NaN();
                rec.message = e.what();
            }
            records[model_base[m] + t * per_trial + cell] = std::move(rec);
        }
    });
    return records;
}

// ---- record files ----------------------------------------------------------

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void write_records(std::ostream& out, std::span<const EvalRecord> records, const std::string& config_hash) {
    for (const auto& r : records) {
        json j;
        j["schema"] = kRecordSchemaVersion;
        if (!config_hash.empty()) j["config_hash"] = config_hash;
        j["model_type"] = r.model_type;
        j["mode"] = std::string(mode_name(r.mode));
        j["seed"] = r.seed;
        j["trial"] = r.trial;
        j["feature"] = r.feature.empty() ? json(nullptr) : json(r.feature);
        j["error_kind"] = r.error_kind.empty() ? json(nullptr) : json(r.error_kind);
        j["error_rate"] = r.error_rate;
        j["mse"] = number_or_null(r.mse);
        j["mse_peak"] = number_or_null(r.mse_peak);
        j["effective_rate"] = r.effective_rate;
        j["ok"] = r.ok;
        if (!r.message.empty()) j["message"] = r.message;
        out << j.dump() << '\n';
    }
}

std::vector<EvalRecord> read_records(std::istream& in) {
    std::vector<EvalRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (j.value("schema", kRecordSchemaVersion) != kRecordSchemaVersion)
                throw Error(ErrorCode::parse, "unsupported record schema");
            EvalRecord r;
            r.model_type = j.at("model_type").get<std::string>();
            r.mode = parse_mode(j.value("mode", std::string("global")));
            r.seed = j.value("seed", std::uint64_t{0});
            r.trial = j.value("trial", std::size_t{0});
            if (j.contains("feature") && !j["feature"].is_null()) r.feature = j["feature"].get<std::string>();
            if (j.contains("error_kind") && !j["error_kind"].is_null()) r.error_kind = j["error_kind"].get<std::string>();
            r.error_rate = j.value("error_rate", 0.0);
            r.mse = number_from(j.at("mse"));
            r.mse_peak = j.contains("mse_peak") ? number_from(j["mse_peak"]) : std::numeric_limits<double>::quiet_NaN();
            r.effective_rate = j.value("effective_rate", 0.0);
            r.ok = j.value("ok", true);
            r.message = j.value("message", std::string{});
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::parse, "records line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace csoeval
