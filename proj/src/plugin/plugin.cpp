#include "csoeval/plugin.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>

#include "csoeval/error.hpp"
#include "json.hpp"

namespace csoeval {

using json = nlohmann::json;

namespace {

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

json layout_json(const Layout& L) {
    return {{"input_len", L.input_len},
            {"horizon", L.horizon},
            {"mode", std::string(mode_name(L.mode))},
            {"input_channels", L.input_channels},
            {"future_channels", L.future_channels},
            {"target_feature", L.target_feature}};
}

}  // namespace

PluginClient::PluginClient(PluginEndpoint endpoint) : endpoint_(std::move(endpoint)) { launch(); }

PluginClient::PluginClient(std::vector<std::string> command) : PluginClient(PluginEndpoint{std::move(command)}) {}

PluginClient::~PluginClient() { close(); }

void PluginClient::launch() {
    if (endpoint_.launch_command.empty()) throw Error(ErrorCode::invalid_argument, "empty plugin command");
    ignore_sigpipe();
    int in_pipe[2];
    int out_pipe[2];
    // Close-on-exec from creation: plugins launched concurrently by other
    // workers must not inherit these ends, or EOF never reaches this child.
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(ErrorCode::io, std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error(ErrorCode::io, std::strerror(errno));
    }
    std::vector<char*> argv;
    for (auto& a : endpoint_.launch_command) argv.push_back(a.data());
    argv.push_back(nullptr);

    pid_ = ::fork();
    if (pid_ < 0) throw Error(ErrorCode::io, std::strerror(errno));
    if (pid_ == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execvp(argv[0], argv.data());
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
}

bool PluginClient::send_line(const std::string& line) {
    if (to_child_ < 0) return false;
    std::string data = line;
    data.push_back('\n');
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

std::optional<std::string> PluginClient::read_line() {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + endpoint_.timeout;
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        if (from_child_ < 0) return std::nullopt;
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
        if (left <= 0) return std::nullopt;
        pollfd pfd{from_child_, POLLIN, 0};
        const int r = ::poll(&pfd, 1, static_cast<int>(left));
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) return std::nullopt;
        char chunk[4096];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            ::close(from_child_);
            from_child_ = -1;
            continue;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

Capabilities PluginClient::handshake() {
    const auto fail = [](const std::string& why) { return Error(ErrorCode::plugin_handshake_failed, why); };
    if (!send_line(json{{"hello", endpoint_.protocol_version}}.dump())) throw fail("cannot write to plugin");
    const auto line = read_line();
    if (!line) throw fail("no reply within timeout");
    Capabilities caps;
    try {
        const json msg = json::parse(*line);
        const json& body = msg.at("capabilities");
        caps.version = body.at("version").get<int>();
        caps.supports_future_covariates = body.value("supports_future_covariates", false);
        caps.model_size_bytes = body.value("model_size_bytes", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw fail(std::string("malformed reply: ") + e.what());
    }
    if (caps.version != endpoint_.protocol_version)
        throw fail("plugin speaks version " + std::to_string(caps.version) + ", host " +
                   std::to_string(endpoint_.protocol_version));
    caps_ = caps;
    return caps;
}

std::string encode_predict_request(const WindowSet& ws, std::size_t w, bool include_future) {
    const Layout& L = ws.layout;
    const std::size_t nf = L.input_features();
    const std::size_t nff = L.future_features();
    json inputs = json::array();
    const auto in = ws.input(w);
    const std::uint8_t* missing = ws.input_missing.data() + w * ws.input_stride();
    for (std::size_t l = 0; l < L.input_len; ++l) {
        json row = json::array();
        for (std::size_t f = 0; f < nf; ++f) {
            const std::size_t i = l * nf + f;
            row.push_back(missing[i] ? json(nullptr) : json(in[i]));
        }
        inputs.push_back(std::move(row));
    }
    json future = json::array();
    if (include_future) {
        const auto fut = ws.future_of(w);
        for (std::size_t s = 0; s < L.horizon; ++s)
            future.push_back(std::vector<double>(fut.begin() + static_cast<std::ptrdiff_t>(s * nff),
                                                 fut.begin() + static_cast<std::ptrdiff_t>((s + 1) * nff)));
    }
    return json{{"predict", {{"seq", w}, {"inputs", std::move(inputs)}, {"future", std::move(future)},
                             {"layout", layout_json(L)}}}}
        .dump();
}

RemotePrediction PluginClient::remote_predict(const WindowSet& ws) {
    if (!caps_) throw Error(ErrorCode::plugin_protocol, "predict before handshake");
    const std::size_t H = ws.layout.horizon;
    RemotePrediction out;
    out.values.assign(ws.count * H, std::numeric_limits<double>::quiet_NaN());
    bool broken = false;
    for (std::size_t w = 0; w < ws.count; ++w) {
        if (broken || !send_line(encode_predict_request(ws, w, caps_->supports_future_covariates))) {
            broken = true;
            out.errors.push_back({w, "broken pipe"});
            continue;
        }
        const auto line = read_line();
        if (!line) {
            broken = true;
            out.errors.push_back({w, "broken pipe"});
            continue;
        }
        try {
            const json msg = json::parse(*line);
            if (msg.contains("error")) {
                out.errors.push_back({w, msg["error"].value("message", std::string("plugin error"))});
                continue;
            }
            const json& body = msg.at("prediction");
            if (body.at("seq").get<std::size_t>() != w) {
                out.errors.push_back({w, "sequence mismatch"});
                continue;
            }
            const json& raw = body.at("values");
            if (!raw.is_array() || raw.size() != H) {
                out.errors.push_back({w, "shape mismatch"});
                continue;
            }
            // JSON has no NaN or infinity; null stands in for them.
            std::vector<double> values;
            bool finite = true;
            for (const auto& v : raw) {
                if (v.is_null()) finite = false;
                values.push_back(v.is_null() ? 0.0 : v.get<double>());
            }
            for (double v : values) finite = finite && std::isfinite(v);
            if (!finite) {
                out.errors.push_back({w, "non-finite values"});
                continue;
            }
            std::copy(values.begin(), values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(w * H));
        } catch (const json::exception&) {
            out.errors.push_back({w, "malformed reply"});
        }
    }
    return out;
}

std::vector<double> PluginClient::predict(const WindowSet& ws) {
    auto r = remote_predict(ws);
    if (!r.errors.empty())
        throw Error(ErrorCode::plugin_protocol,
                    "window " + std::to_string(r.errors.front().seq) + ": " + r.errors.front().message);
    return std::move(r.values);
}

int PluginClient::close() {
    if (exit_status_) return *exit_status_;
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    if (pid_ <= 0) return -1;
    int status = 0;
    // Give the plugin a moment to exit on EOF, then kill it.
    for (int i = 0; i < 200; ++i) {
        const pid_t r = ::waitpid(pid_, &status, WNOHANG);
        if (r == pid_) {
            exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
            break;
        }
        ::usleep(10000);
    }
    if (!exit_status_) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        exit_status_ = -1;
    }
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
    return *exit_status_;
}

}  // namespace csoeval
