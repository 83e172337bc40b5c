#pragma once

// Synthetic combined-sewer data: rain-driven basin filling levels plus the
// auxiliary sensors a real network would carry.
//
//   rain(t)     sum of storm cells; Poisson arrivals, Lomax (Pareto II)
//               peak intensities capped at rain_max, exponential decay
//               after onset
//   level(t)    clamp(level(t-1) (1 - drain) + gain rain(t) + eps, 0, capacity)
//   pump(t)     increasing in level, plus noise
//   valve(t)    1 while level exceeds valve_threshold * capacity
//   aux_k(t)    AR(1) nuisance sensors unrelated to the level
//   rain_fc(t)  rain(t) + N(0, forecast_noise_sd), floored at 0 (future covariate)

#include <cstdint>

#include "csoeval/frame.hpp"

namespace csoeval {

struct SynthConfig {
    std::size_t length = 26280;  // three non-leap years, hourly
    std::uint64_t seed = 1;
    Timestamp start = Timestamp{std::chrono::seconds{1609459200}};  // 2021-01-01T00:00:00Z
    double rain_event_rate = 0.6;   // storm cells per day
    double rain_shape = 2.5;        // Lomax shape (tail index)
    double rain_scale = 6.0;        // Lomax scale, mm/h
    double rain_max = 60.0;         // peak intensities are capped here, mm/h
    double rain_decay_hours = 2.0;  // e-folding time of a cell
    double basin_capacity = 100.0;
    double initial_level = 0.0;
    double drain_rate = 0.03;       // fraction per hour
    double runoff_gain = 1.5;       // level units per mm/h
    double noise_sd = 0.5;
    double valve_threshold = 0.05;  // fraction of capacity
    std::size_t n_aux_channels = 3;
    double forecast_noise_sd = 0.5;
};

void validate(const SynthConfig& cfg);

TimeSeriesFrame generate(const SynthConfig& cfg);

}  // namespace csoeval
