#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace csoeval {

/// Failure categories surfaced by the library. Each maps to one stable
/// message prefix so callers (and the CLI's machine-readable errors) can
/// match on either.
enum class ErrorCode {
    no_data,
    invalid_reading,
    underdetermined_channel,
    split_out_of_range,
    horizon_too_long,
    degenerate_distribution,
    no_such_channel,
    insufficient_history,
    ill_conditioned_fit,
    schema_mismatch,
    empty_evaluation_set,
    no_peaks,
    insufficient_trials,
    invalid_measurement,
    mode_mismatch,
    plugin_handshake_failed,
    plugin_protocol,
    invalid_argument,
    io,
    parse,
};

std::string_view error_code_text(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail = {});

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace csoeval
