#include "csoeval/error.hpp"

namespace csoeval {

std::string_view error_code_text(ErrorCode code) {
    switch (code) {
        case ErrorCode::no_data: return "no data";
        case ErrorCode::invalid_reading: return "invalid reading";
        case ErrorCode::underdetermined_channel: return "underdetermined channel";
        case ErrorCode::split_out_of_range: return "split out of range";
        case ErrorCode::horizon_too_long: return "horizon too long";
        case ErrorCode::degenerate_distribution: return "degenerate distribution";
        case ErrorCode::no_such_channel: return "no such channel";
        case ErrorCode::insufficient_history: return "insufficient history";
        case ErrorCode::ill_conditioned_fit: return "ill-conditioned fit";
        case ErrorCode::schema_mismatch: return "schema mismatch";
        case ErrorCode::empty_evaluation_set: return "empty evaluation set";
        case ErrorCode::no_peaks: return "no peaks";
        case ErrorCode::insufficient_trials: return "insufficient trials";
        case ErrorCode::invalid_measurement: return "invalid measurement";
        case ErrorCode::mode_mismatch: return "mode mismatch";
        case ErrorCode::plugin_handshake_failed: return "plugin handshake failed";
        case ErrorCode::plugin_protocol: return "plugin protocol error";
        case ErrorCode::invalid_argument: return "invalid argument";
        case ErrorCode::io: return "i/o error";
        case ErrorCode::parse: return "parse error";
    }
    return "error";
}

namespace {

std::string compose(ErrorCode code, const std::string& detail) {
    std::string msg(error_code_text(code));
    if (!detail.empty()) {
        msg += ": ";
        msg += detail;
    }
    return msg;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(compose(code, detail)), code_(code) {}

}  // namespace csoeval
