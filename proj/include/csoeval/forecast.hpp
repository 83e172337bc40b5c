#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csoeval/frame.hpp"

namespace csoeval {

enum class Mode { global, local };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view text);

/// Geometry of the prediction problem.
struct ForecastTask {
    std::size_t input_len = 72;
    std::size_t horizon = 12;
    Mode mode = Mode::global;
    std::size_t batch_size = 256;
};

/// Which frame channels feed a model, in which order.
struct Layout {
    std::size_t input_len = 0;
    std::size_t horizon = 0;
    Mode mode = Mode::global;
    std::vector<std::string> input_channels;
    std::vector<std::string> future_channels;
    /// Position of the target among input_channels.
    std::size_t target_feature = 0;

    std::size_t input_features() const { return input_channels.size(); }
    std::size_t future_features() const { return future_channels.size(); }

    bool operator==(const Layout&) const = default;
};

/// Dense stride-1 sliding windows over one segment.
///
/// Window w ends its input at time index origins[w] of the source segment;
/// step s of its target is the value at origins[w] + 1 + s. Missing input
/// cells are zero-filled, flagged in input_missing, and raise the matching
/// "<channel>__imputed" feature when the layout carries one.
struct WindowSet {
    Layout layout;
    std::size_t count = 0;
    std::vector<double> inputs;               // [count][input_len][input_features]
    std::vector<std::uint8_t> input_missing;  // same shape as inputs
    std::vector<double> future;               // [count][horizon][future_features]
    std::vector<double> targets;              // [count][horizon]
    std::vector<std::size_t> origins;

    std::size_t input_stride() const { return layout.input_len * layout.input_features(); }
    std::size_t future_stride() const { return layout.horizon * layout.future_features(); }

    std::span<const double> input(std::size_t w) const {
        return std::span(inputs).subspan(w * input_stride(), input_stride());
    }
    std::span<const double> future_of(std::size_t w) const {
        return std::span(future).subspan(w * future_stride(), future_stride());
    }
    std::span<const double> target(std::size_t w) const {
        return std::span(targets).subspan(w * layout.horizon, layout.horizon);
    }
    /// Windows [begin, end) as a new set.
    WindowSet slice(std::size_t begin, std::size_t end) const;
};

/// Layout a frame produces under `task`.
Layout layout_for(const TimeSeriesFrame& frame, const ForecastTask& task);

/// Builds windows from `frame`. Targets come from `truth` when given (it must
/// share the frame's geometry), which lets perturbed inputs be scored against
/// clean targets. Windows whose targets contain a missing cell are skipped.
/// In local mode the shifted-target placeholder is derived when absent.
WindowSet build_windows(const TimeSeriesFrame& frame, const ForecastTask& task,
                        const TimeSeriesFrame* truth = nullptr);

enum class Family { persistence, seasonal_naive, linear_direct, linear_recursive, mlp_direct, external_plugin };

std::string_view family_name(Family family);
Family parse_family(std::string_view text);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    AdamConfig adam;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    double ridge_lambda = 1e-3;
    std::size_t hidden = 64;
    std::size_t season = 24;
};

/// Sizes of the parameter blocks.
struct ModelShape {
    std::size_t inputs = 0;
    std::size_t hidden = 0;
    std::size_t outputs = 0;
    std::size_t season = 24;

    bool operator==(const ModelShape&) const = default;
};

/// A fitted forecaster. Immutable; predictions depend only on the stored
/// parameters and the windows passed in.
class ForecasterHandle {
public:
    ForecasterHandle() = default;
    ForecasterHandle(Family family, Layout layout, ModelShape shape, std::vector<double> params,
                     std::uint64_t seed);

    /// An out-of-process forecaster reached through the plugin protocol.
    static ForecasterHandle plugin(std::vector<std::string> command, Layout layout,
                                   std::uint64_t declared_size, std::uint64_t seed = 0);

    Family family() const { return family_; }
    const Layout& layout() const { return layout_; }
    const ModelShape& shape() const { return shape_; }
    std::span<const double> parameters() const { return params_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<std::string>& plugin_command() const { return command_; }

    /// Learnable parameters (weights and biases); 0 for closed-form baselines.
    std::size_t param_count() const;
    /// Bytes of serialize(); for plugins the size the plugin declared.
    std::size_t serialized_size() const;

    std::vector<std::uint8_t> serialize() const;
    static ForecasterHandle deserialize(std::span<const std::uint8_t> bytes);

    bool operator==(const ForecasterHandle&) const = default;

private:
    Family family_ = Family::persistence;
    Layout layout_;
    ModelShape shape_;
    std::vector<double> params_;
    std::uint64_t seed_ = 0;
    std::vector<std::string> command_;
    std::uint64_t declared_size_ = 0;
};

struct FitReport {
    std::vector<double> train_loss;  // per epoch, mean minibatch loss
    std::vector<double> val_mse;     // per epoch
    std::size_t best_epoch = 0;
};

/// Fits one family. Val windows may be empty for closed-form families.
ForecasterHandle fit(Family family, const WindowSet& train, const WindowSet& val, const TrainConfig& cfg,
                     FitReport* report = nullptr);

/// [count x horizon] predictions. Throws Error(schema_mismatch) when the
/// windows' layout differs from the one seen at fit time.
std::vector<double> predict(const ForecasterHandle& handle, const WindowSet& windows);

struct Complexity {
    double inference_seconds = 0.0;
    std::size_t size_bytes = 0;
    std::size_t param_count = 0;
};

/// Median wall-clock of `repeats` (>= 5) full predictions after one warm-up.
Complexity measure_complexity(const ForecasterHandle& handle, const WindowSet& probe, std::size_t repeats = 5);

// ---- building blocks exposed for tests -----------------------------------

/// Flattened regression features of window w: inputs, then the whole
/// future-covariate block (direct) or only its first step (recursive).
void direct_features(const WindowSet& windows, std::size_t w, std::span<double> out);

namespace mlp {

/// Parameter offsets inside a flat [W1 | b1 | W2 | b2] block.
struct Offsets {
    std::size_t w1, b1, w2, b2, total;
};
Offsets offsets(std::size_t inputs, std::size_t hidden, std::size_t outputs);

/// Mean squared error over a batch (rows of x / y) and its gradient with
/// respect to the flat parameter block.
double loss_and_gradient(std::span<const double> params, std::size_t inputs, std::size_t hidden,
                         std::size_t outputs, std::span<const double> x, std::span<const double> y,
                         std::size_t rows, std::span<double> grad);

}  // namespace mlp

}  // namespace csoeval
