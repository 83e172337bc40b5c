// Test forecaster speaking the plugin protocol on stdin/stdout.
//
//   echo_plugin [--mode last|seasonal|wrong-length|nonfinite|error|silent]
//               [--version N] [--season S] [--size BYTES] [--fail-every K]
//
// last       repeat the last non-missing target input for every step
// seasonal   value one season back from each target step (missing as 0)
// wrong-length   one value too many
// nonfinite  null in place of the first value
// error      an error reply for every window
// silent     never answer the handshake
// --fail-every K answers every K-th window (seq % K == K - 1) with an error.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <thread>

#include "json.hpp"

using json = nlohmann::json;

int main(int argc, char** argv) {
    CLI::App app{"protocol test plugin"};
    std::string mode = "last";
    int version = 1;
    std::size_t season = 24;
    std::uint64_t size = 1024;
    std::size_t fail_every = 0;
    app.add_option("--mode", mode);
    app.add_option("--version", version);
    app.add_option("--season", season);
    app.add_option("--size", size);
    app.add_option("--fail-every", fail_every);
    CLI11_PARSE(app, argc, argv);

    std::string line;
    while (std::getline(std::cin, line)) {
        json msg;
        try {
            msg = json::parse(line);
        } catch (const json::exception&) {
            std::cout << json{{"error", {{"seq", nullptr}, {"message", "malformed request"}}}}.dump() << std::endl;
            continue;
        }
        if (msg.contains("hello")) {
            if (mode == "silent") {
                std::this_thread::sleep_for(std::chrono::hours(1));
                return 0;
            }
            std::cout << json{{"capabilities",
                               {{"version", version}, {"supports_future_covariates", true}, {"model_size_bytes", size}}}}
                             .dump()
                      << std::endl;
            continue;
        }
        const json& req = msg.at("predict");
        const auto seq = req.at("seq").get<std::size_t>();
        if (mode == "error" || (fail_every > 0 && seq % fail_every == fail_every - 1)) {
            std::cout << json{{"error", {{"seq", seq}, {"message", "model failure"}}}}.dump() << std::endl;
            continue;
        }
        const json& layout = req.at("layout");
        const auto horizon = layout.at("horizon").get<std::size_t>();
        const auto target = layout.at("target_feature").get<std::size_t>();
        const json& inputs = req.at("inputs");
        const std::size_t len = inputs.size();
        json values = json::array();
        const auto value = [&](std::size_t l) {
            const json& cell = inputs[l][target];
            return cell.is_null() ? 0.0 : cell.get<double>();
        };
        double last = 0.0;
        for (std::size_t l = len; l-- > 0;)
            if (!inputs[l][target].is_null()) {
                last = inputs[l][target].get<double>();
                break;
            }
        for (std::size_t s = 0; s < horizon; ++s) {
            double v = last;
            if (mode == "seasonal") {
                const std::size_t ahead = s + 1;
                const std::size_t back = season * ((ahead + season - 1) / season) - ahead;
                v = value(back < len ? len - 1 - back : len - 1);
            }
            values.push_back(v);
        }
        if (mode == "wrong-length") values.push_back(0.0);
        if (mode == "nonfinite") values[0] = nullptr;
        std::cout << json{{"prediction", {{"seq", seq}, {"values", values}}}}.dump() << std::endl;
    }
    return 0;
}
