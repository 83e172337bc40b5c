#include "csoeval/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csoeval/error.hpp"
#include "csoeval/rng.hpp"

namespace csoeval {

void validate(const SynthConfig& cfg) {
    const bool ok = cfg.length >= 1 && cfg.rain_event_rate >= 0.0 && cfg.rain_shape > 0.0 && cfg.rain_scale > 0.0 && cfg.rain_max > 0.0 &&
                    cfg.rain_decay_hours > 0.0 && cfg.basin_capacity > 0.0 && cfg.drain_rate > 0.0 &&
                    cfg.drain_rate < 1.0 && cfg.runoff_gain >= 0.0 && cfg.noise_sd >= 0.0 &&
                    cfg.forecast_noise_sd >= 0.0 && cfg.valve_threshold >= 0.0;
    if (!ok) throw Error(ErrorCode::invalid_argument, "synth config out of range");
}

TimeSeriesFrame generate(const SynthConfig& cfg) {
    validate(cfg);
    const std::size_t n = cfg.length;

    // Storm cells: arrival times from a Poisson process, each adds a decaying
    // pulse from its onset hour on.
    std::vector<double> rain(n, 0.0);
    Rng storms(derive_seed(cfg.seed, "rain"));
    if (cfg.rain_event_rate > 0.0) {
        const double per_hour = cfg.rain_event_rate / 24.0;
        const double cutoff = 1e-4;
        double t = storms.exponential(per_hour);
        while (t < static_cast<double>(n)) {
            const double u = std::max(storms.uniform(), 1e-300);
            const double peak = std::min(cfg.rain_max, cfg.rain_scale * (std::pow(u, -1.0 / cfg.rain_shape) - 1.0));
            const auto onset = static_cast<std::size_t>(t);
            for (std::size_t i = onset; i < n; ++i) {
                const double v = peak * std::exp(-static_cast<double>(i - onset) / cfg.rain_decay_hours);
                if (v < cutoff) break;
                rain[i] += v;
            }
            t += storms.exponential(per_hour);
        }
    }

    std::vector<double> level(n);
    Rng process(derive_seed(cfg.seed, "level"));
    double prev = std::clamp(cfg.initial_level, 0.0, cfg.basin_capacity);
    for (std::size_t i = 0; i < n; ++i) {
        const double eps = cfg.noise_sd > 0.0 ? process.normal(0.0, cfg.noise_sd) : 0.0;
        prev = std::clamp(prev * (1.0 - cfg.drain_rate) + cfg.runoff_gain * rain[i] + eps, 0.0, cfg.basin_capacity);
        level[i] = prev;
    }

    std::vector<double> pump(n), valve(n), forecast(n);
    Rng sensors(derive_seed(cfg.seed, "sensors"));
    Rng fc(derive_seed(cfg.seed, "forecast"));
    for (std::size_t i = 0; i < n; ++i) {
        const double frac = level[i] / cfg.basin_capacity;
        pump[i] = 2.0 * frac + 3.0 * frac * frac + sensors.normal(0.0, 0.05);
        valve[i] = level[i] > cfg.valve_threshold * cfg.basin_capacity ? 1.0 : 0.0;
        const double noise = cfg.forecast_noise_sd > 0.0 ? fc.normal(0.0, cfg.forecast_noise_sd) : 0.0;
        forecast[i] = std::max(0.0, rain[i] + noise);
    }

    std::vector<ChannelSpec> specs{
        {"rain", Role::past_covariate, "mm/h", {}},
        {"rain_forecast", Role::future_covariate, "mm/h", {}},
        {"level", Role::target, "%", {}},
        {"pump_energy", Role::past_covariate, "kWh", {}},
        {"valve_state", Role::past_covariate, "bool", {}},
    };
    std::vector<std::vector<double>> columns{std::move(rain), std::move(forecast), std::move(level), std::move(pump),
                                             std::move(valve)};
    for (std::size_t k = 0; k < cfg.n_aux_channels; ++k) {
        Rng aux(derive_seed(derive_seed(cfg.seed, "aux"), k));
        std::vector<double> col(n);
        double x = 0.0;
        const double phi = 0.95;
        for (std::size_t i = 0; i < n; ++i) {
            x = phi * x + aux.normal(0.0, 1.0);
            col[i] = 10.0 + x;
        }
        specs.push_back({"aux_" + std::to_string(k), Role::past_covariate, {}, {}});
        columns.push_back(std::move(col));
    }
    return TimeSeriesFrame(cfg.start, Seconds{3600}, std::move(specs), std::move(columns));
}

}  // namespace csoeval
