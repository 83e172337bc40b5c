#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "csoeval/evaluate.hpp"

namespace csoeval::cli {

struct ReportMeta {
    std::string config_hash;
    std::uint64_t seed_base = 0;
};

/// Writes the four figure types as SVG with a CSV of the plotted data each:
///   mse_spread    clean MSE across trials per model (box plot)
///   mse_peak      median MSE on all test cells vs. on the peak mask
///   mse_increase  MSE_perturbed - MSE_clean per model and error kind
///   tradeoff      median MSE against IQR, RI and CCI
/// Returns the files written.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir,
                                                std::span<const EvalRecord> records,
                                                std::span<const TradeoffIndices> indices, const ReportMeta& meta);

}  // namespace csoeval::cli
