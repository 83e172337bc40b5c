#pragma once

// Host side of the external-forecaster protocol: UTF-8 JSON lines over the
// plugin's stdin/stdout. See docs/protocol.md for the byte-level format.

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csoeval/forecast.hpp"

namespace csoeval {

inline constexpr int kProtocolVersion = 1;

struct Capabilities {
    int version = 0;
    bool supports_future_covariates = false;
    std::uint64_t model_size_bytes = 0;
};

struct PluginEndpoint {
    std::vector<std::string> launch_command;
    int protocol_version = kProtocolVersion;
    std::chrono::milliseconds timeout{10000};
};

struct WindowError {
    std::size_t seq = 0;
    std::string message;
};

struct RemotePrediction {
    std::vector<double> values;  // [count x horizon], NaN rows for failed windows
    std::vector<WindowError> errors;
};

/// One running plugin process. Not thread-safe: use one client per worker.
class PluginClient {
public:
    explicit PluginClient(PluginEndpoint endpoint);
    explicit PluginClient(std::vector<std::string> command);
    ~PluginClient();

    PluginClient(const PluginClient&) = delete;
    PluginClient& operator=(const PluginClient&) = delete;

    /// Sends {"hello": version} and waits for the capabilities reply.
    /// Throws Error(plugin_handshake_failed) on timeout, malformed reply or
    /// version mismatch.
    Capabilities handshake();

    /// Streams every window and collects replies in order. Per-window failures
    /// (shape mismatch, non-finite values, plugin error messages, broken pipe)
    /// are reported in errors rather than thrown.
    RemotePrediction remote_predict(const WindowSet& windows);

    /// remote_predict() that throws Error(plugin_protocol) on the first error.
    std::vector<double> predict(const WindowSet& windows);

    /// Closes the plugin's stdin and reaps it. Returns its exit status, or
    /// -1 if it had to be killed.
    int close();

    const std::optional<Capabilities>& capabilities() const { return caps_; }

private:
    void launch();
    bool send_line(const std::string& line);
    std::optional<std::string> read_line();

    PluginEndpoint endpoint_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    std::optional<Capabilities> caps_;
    std::optional<int> exit_status_;
};

/// JSON request line for one window (without trailing newline).
std::string encode_predict_request(const WindowSet& windows, std::size_t w, bool include_future);

}  // namespace csoeval
