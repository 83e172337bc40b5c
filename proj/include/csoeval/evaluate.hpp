#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csoeval/errgen.hpp"
#include "csoeval/forecast.hpp"

namespace csoeval {

// ---- metrics ---------------------------------------------------------------

/// Peak-event selection over one target series.
struct PeakMask {
    std::size_t window = 48;
    double top_fraction = 0.2;
    std::vector<std::uint8_t> selected;  // one flag per time index
    std::size_t valid = 0;               // indices with a defined difference

    std::size_t count() const;
};

struct PeakOptions {
    std::size_t window = 48;
    double top_fraction = 0.2;
    /// Use |x(t) - x(t-1)|; signed differences otherwise.
    bool absolute = true;
};

/// d(t) = |x(t) - x(t-1)| for t >= 1, smoothed by a centered rolling mean
/// that shrinks at the edges; selects indices whose smoothed value lies
/// strictly above the (1 - top_fraction) quantile. Throws Error(no_peaks) when
/// nothing qualifies (e.g. all smoothed values equal).
PeakMask peak_mask(std::span<const double> target, const PeakOptions& opts = {});

/// Centered rolling mean with window w over [t - w/2, t + (w-1)/2], clipped
/// to the series.
std::vector<double> centered_rolling_mean(std::span<const double> x, std::size_t window);

/// Mean squared error over all cells. Throws Error(empty_evaluation_set).
double mse(std::span<const double> pred, std::span<const double> truth);

/// Mean squared error over the (window, step) cells whose target time index
/// origins[w] + 1 + s is selected by the mask.
double mse(std::span<const double> pred, std::span<const double> truth, std::span<const std::size_t> origins,
           std::size_t horizon, const PeakMask& mask);

// ---- records ---------------------------------------------------------------

/// One cell of the robustness loop. Clean records leave feature and
/// error_kind empty and error_rate 0.
struct EvalRecord {
    std::string model_type;
    Mode mode = Mode::global;
    std::uint64_t seed = 0;
    std::size_t trial = 0;
    std::string feature;
    std::string error_kind;
    double error_rate = 0.0;
    double mse = 0.0;
    double mse_peak = 0.0;
    double effective_rate = 0.0;
    bool ok = true;
    std::string message;

    bool clean() const { return feature.empty(); }
    bool operator==(const EvalRecord&) const = default;
};

inline constexpr int kRecordSchemaVersion = 1;

/// One JSON object per line. `config_hash` is embedded in every line when set.
void write_records(std::ostream& out, std::span<const EvalRecord> records, const std::string& config_hash = {});
std::vector<EvalRecord> read_records(std::istream& in);

// ---- robustness sweep ------------------------------------------------------

struct ModelTrials {
    std::string model_type;
    std::vector<ForecasterHandle> trials;
};

struct SweepConfig {
    std::vector<std::string> features;
    std::vector<ErrorKind> kinds;
    std::vector<double> rates;
    std::uint64_t seed_base = 0;
    std::size_t cluster_mean_len = 24;
    PeakOptions peak;
    std::size_t jobs = 1;
    /// Fences and clip bounds from this frame instead of the perturbed one.
    const TimeSeriesFrame* reference = nullptr;
};

/// Default error grid: outlier (1.1, 0.1), missing, clip (0.2, 0.8).
std::vector<ErrorKind> default_error_kinds();
std::vector<double> default_error_rates();

/// Nested loop model type -> trial -> feature -> error kind -> rate. Each
/// (model, trial) first gets its clean record. Perturbations touch model
/// inputs only; targets stay clean. Corruption streams depend on
/// (seed_base, trial index, feature, kind, rate), so every model type sees
/// the same corruption in a given cell and the output does not depend on
/// `jobs`. Failing cells are recorded with ok = false.
std::vector<EvalRecord> robustness_sweep(const std::vector<ModelTrials>& models, const TimeSeriesFrame& test,
                                         const ForecastTask& task, const SweepConfig& cfg);

// ---- aggregation -----------------------------------------------------------

struct Consistency {
    double median_mse = 0.0;
    double iqr_mse = 0.0;
    std::size_t trials = 0;
};

/// Median and IQR of clean MSE per model type. Throws
/// Error(insufficient_trials) for a model with fewer than two clean records.
std::map<std::string, Consistency> consistency(std::span<const EvalRecord> records);

/// Consistency IQR for local-mode models. Throws Error(mode_mismatch) if any
/// record is global.
std::map<std::string, double> local_robustness(std::span<const EvalRecord> records);

struct CciInput {
    double inference_seconds = 0.0;
    double size_bytes = 0.0;
};

/// CCI_i = (t_i / max t + s_i / max s) / 2. Throws Error(invalid_measurement)
/// for non-positive inputs.
std::vector<double> cci(std::span<const CciInput> models);

struct RiInput {
    double iqr_clean = 0.0;
    double mean_abs_increase = 0.0;
    double iqr_abs_increase = 0.0;
};

/// RI_i = (iqr_i / max iqr + pert_i / max pert + iqr_pert_i / max iqr_pert) / 3.
/// A component whose column is all zero contributes 0.
std::vector<double> ri(std::span<const RiInput> models);

/// Per model type: IQR of clean MSE, mean and IQR of |MSE_perturbed - MSE_clean|
/// over all successful perturbed cells (paired with the clean record of the
/// same trial).
std::map<std::string, RiInput> ri_components(std::span<const EvalRecord> records);

struct TradeoffIndices {
    std::string model_type;
    Mode mode = Mode::global;
    double median_mse = 0.0;
    double median_mse_peak = 0.0;
    std::size_t trials = 0;
    double iqr_mse = 0.0;
    std::optional<double> cci;
    std::optional<double> ri;
    std::optional<CciInput> complexity;
    RiInput robustness;
};

/// One row per model type, in order of first appearance. RI is normalized over
/// the global-mode model types and left unset for local ones, whose robustness
/// figure is the clean-MSE IQR. CCI is normalized over the model types with a
/// complexity entry.
std::vector<TradeoffIndices> tradeoff_indices(std::span<const EvalRecord> records,
                                              const std::map<std::string, CciInput>& complexity = {});

}  // namespace csoeval
