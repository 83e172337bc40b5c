#pragma once

// Run orchestration behind the `csoeval` executable.
//
// A run directory holds:
//   dataset.csv, dataset.schema.yaml   synth / input data
//   models/<label>/seed_<k>.bin        fitted handles
//   models/manifest.json               labels, seeds, config hash
//   complexity.jsonl                   inference time and size per model
//   records.jsonl                      robustness sweep
//   indices.json                       consistency, RI, CCI
//   report/*.svg, report/*.csv         figures and their data

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "csoeval/errgen.hpp"
#include "csoeval/evaluate.hpp"
#include "csoeval/forecast.hpp"
#include "csoeval/synth.hpp"

namespace csoeval::cli {

/// One entry of the `models` list: a family (optionally "@local"/"@global")
/// or an external plugin.
struct ModelEntry {
    std::string label;
    Family family = Family::linear_direct;
    Mode mode = Mode::global;
    std::vector<std::string> plugin_command;
};

ModelEntry parse_model_label(const std::string& label);

struct RunConfig {
    std::variant<SynthConfig, std::filesystem::path> dataset = SynthConfig{};
    ChronoSplit split{parse_timestamp("2022-08-01"), parse_timestamp("2023-01-01")};
    ForecastTask task;
    std::vector<ModelEntry> models;
    std::size_t n_seeds = 10;
    std::uint64_t seed_base = 0;
    TrainConfig train;
    std::vector<ErrorKind> kinds = default_error_kinds();
    std::vector<double> rates = default_error_rates();
    std::size_t cluster_mean_len = 24;
    /// Outlier fences and clip bounds from the training segment instead of
    /// the perturbed test channel.
    bool fences_from_train = false;
    /// Channels to perturb; empty means every data channel.
    std::vector<std::string> features;
    PeakOptions peak;
    std::optional<std::filesystem::path> output_dir;
};

/// Throws Error(parse) / Error(invalid_argument).
RunConfig parse_run_config(const std::string& yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical YAML form; reparsing it gives the same config hash.
std::string dump_run_config(const RunConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical form.
std::string config_hash(const RunConfig& cfg);

/// Training seed of trial k.
std::uint64_t trial_seed(std::uint64_t seed_base, std::size_t k);

/// Parses argv and runs one subcommand. Exit status 0 on success, 1 for user
/// errors (bad flags, config, data), 2 for internal failures; failures print
/// one JSON object {"error": {...}} on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csoeval::cli
