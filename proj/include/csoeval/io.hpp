#pragma once

// CSV and schema-sidecar persistence for TimeSeriesFrame.
//
// CSV layout: header row "timestamp,<channel>,...", one row per step,
// ISO-8601 UTC timestamps, numbers in shortest round-trip form, empty field
// for a missing cell. Files written here are canonical: reading and writing
// them again reproduces the same bytes.
//
// The schema sidecar is YAML:
//
//   step_seconds: 3600
//   channels:
//     - {name: level, role: target, unit: cm}
//     - {name: level__imputed, role: imputation_indicator, source: level}

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "csoeval/frame.hpp"

namespace csoeval {

struct Schema {
    Seconds step{3600};
    std::vector<ChannelSpec> channels;
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);
/// Throws Error(parse) on malformed input.
double parse_number(std::string_view text);

TimeSeriesFrame read_csv(std::istream& in, const Schema& schema);
void write_csv(std::ostream& out, const TimeSeriesFrame& frame);

TimeSeriesFrame read_csv(const std::filesystem::path& path, const Schema& schema);
void write_csv(const std::filesystem::path& path, const TimeSeriesFrame& frame);

Schema schema_of(const TimeSeriesFrame& frame);
Schema read_schema(const std::filesystem::path& path);
Schema parse_schema(const std::string& yaml_text);
void write_schema(const std::filesystem::path& path, const Schema& schema);
std::string dump_schema(const Schema& schema);

/// Conventional sidecar path: "data.csv" -> "data.schema.yaml".
std::filesystem::path schema_path_for(const std::filesystem::path& csv);

/// Reads a frame and its sidecar.
TimeSeriesFrame load_frame(const std::filesystem::path& csv);
/// Writes a frame and its sidecar.
void save_frame(const std::filesystem::path& csv, const TimeSeriesFrame& frame);

}  // namespace csoeval
