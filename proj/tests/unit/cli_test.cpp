#include "csoeval/cli.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csoeval/error.hpp"
#include "csoeval/io.hpp"

namespace csoeval::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* kSmallConfig = R"(dataset:
  synth:
    length: 2000
    seed: 5
    n_aux_channels: 1
split:
  train_end: 2021-02-15
  val_end: 2021-03-01
task:
  input_len: 24
  horizon: 6
models:
  - persistence
  - linear_direct
  - linear_recursive
  - linear_direct@local
n_seeds: 2
seed_base: 11
error_grid:
  kinds: [outlier, missing]
  rates: [0.2]
features: [rain, level]
)";

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("csoeval_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int invoke(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
    args.insert(args.begin(), "csoeval");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int status = run(int(argv.size()), argv.data(), o, e);
    if (out) *out = o.str();
    if (err) *err = e.str();
    return status;
}

TEST(Config, ParsesAndHashesStably) {
    const auto cfg = parse_run_config(kSmallConfig);
    ASSERT_EQ(cfg.models.size(), 4u);
    EXPECT_EQ(cfg.models[3].mode, Mode::local);
    EXPECT_EQ(cfg.models[3].family, Family::linear_direct);
    EXPECT_EQ(cfg.task.input_len, 24u);
    EXPECT_EQ(cfg.kinds.size(), 2u);
    EXPECT_FALSE(cfg.fences_from_train);
    EXPECT_EQ(std::get<SynthConfig>(cfg.dataset).length, 2000u);

    const auto again = parse_run_config(dump_run_config(cfg));
    EXPECT_EQ(config_hash(again), config_hash(cfg));
    EXPECT_EQ(dump_run_config(again), dump_run_config(cfg));
    EXPECT_EQ(config_hash(cfg).size(), 16u);

    auto other = cfg;
    other.seed_base = 12;
    EXPECT_NE(config_hash(other), config_hash(cfg));
}

TEST(Config, FencesKey) {
    const auto cfg = parse_run_config(std::string(kSmallConfig) + "output_dir: x\n");
    auto train = parse_run_config(
        "models: [persistence]\nerror_grid:\n  fences: train\n");
    EXPECT_TRUE(train.fences_from_train);
    EXPECT_NE(dump_run_config(train).find("fences: train"), std::string::npos);
    EXPECT_TRUE(parse_run_config(dump_run_config(train)).fences_from_train);
    EXPECT_THROW(parse_run_config("models: [persistence]\nerror_grid:\n  fences: both\n"), Error);
    EXPECT_TRUE(cfg.output_dir.has_value());
}

TEST(Config, Rejects) {
    EXPECT_THROW(parse_run_config(""), Error);
    EXPECT_THROW(parse_run_config("models: [persistence]\nbogus: 1\n"), Error);
    EXPECT_THROW(parse_run_config("models: [persistence, persistence]\n"), Error);
    EXPECT_THROW(parse_run_config("models: []\n"), Error);
    EXPECT_THROW(parse_run_config("models: [persistence]\nn_seeds: 1\n"), Error);
    EXPECT_THROW(parse_run_config("models: [persistence]\nerror_grid:\n  rates: [1.5]\n"), Error);
    EXPECT_THROW(parse_run_config("models: [nope]\n"), Error);
    EXPECT_THROW(parse_run_config("models: [persistence]\nsplit:\n  train_end: 2022-01-01\n  val_end: 2021-01-01\n"),
                 Error);
    EXPECT_THROW(parse_run_config("models: [persistence]\ntask: [1, 2]\n"), Error);
}

TEST(Config, TrialSeedsDiffer) {
    EXPECT_NE(trial_seed(0, 0), trial_seed(0, 1));
    EXPECT_NE(trial_seed(0, 0), trial_seed(1, 0));
    EXPECT_EQ(trial_seed(7, 3), trial_seed(7, 3));
}

std::string record(const std::string& model, const std::string& mode, int trial, const std::string& feature,
                   double mse) {
    json j{{"schema", 1},          {"config_hash", "00000000000000aa"},
           {"model_type", model},  {"mode", mode},
           {"seed", 100 + trial},  {"trial", trial},
           {"feature", nullptr},   {"error_kind", nullptr},
           {"error_rate", 0.0},    {"mse", mse},
           {"mse_peak", 2 * mse},  {"effective_rate", 0.0},
           {"ok", true}};
    if (!feature.empty()) {
        j["feature"] = feature;
        j["error_kind"] = "outlier";
        j["error_rate"] = 0.2;
    }
    return j.dump() + "\n";
}

TEST(Cli, IndicesFromHandWrittenRecords) {
    const auto dir = scratch("indices");
    std::string records;
    records += record("a", "global", 0, "", 1.0) + record("a", "global", 0, "rain", 2.0);
    records += record("a", "global", 1, "", 3.0) + record("a", "global", 1, "rain", 6.0);
    records += record("b", "global", 0, "", 2.0) + record("b", "global", 0, "rain", 2.5);
    records += record("b", "global", 1, "", 2.0) + record("b", "global", 1, "rain", 2.5);
    records += record("c", "local", 0, "", 4.0) + record("c", "local", 1, "", 6.0);
    write(dir / "records.jsonl", records);
    write(dir / "complexity.jsonl", R"({"model_type":"a","inference_seconds":0.01,"size_bytes":1000})"
                                    "\n"
                                    R"({"model_type":"b","inference_seconds":0.02,"size_bytes":500})"
                                    "\n"
                                    R"({"model_type":"c","inference_seconds":0.04,"size_bytes":250})"
                                    "\n");
    ASSERT_EQ(invoke({"indices", "--records", (dir / "records.jsonl").string(), "--complexity",
                      (dir / "complexity.jsonl").string(), "--output", dir.string()}),
              0);
    const auto j = json::parse(slurp(dir / "indices.json"));
    EXPECT_EQ(j["config_hash"], "00000000000000aa");
    const auto& m = j["models"];
    ASSERT_EQ(m.size(), 3u);

    // Two trials: median is the midpoint, type-7 IQR is half the range.
    EXPECT_DOUBLE_EQ(m[0]["median_mse"].get<double>(), 2.0);
    EXPECT_DOUBLE_EQ(m[0]["iqr_mse"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(m[0]["median_mse_peak"].get<double>(), 4.0);
    EXPECT_DOUBLE_EQ(m[0]["mean_abs_increase"].get<double>(), 2.0);
    EXPECT_DOUBLE_EQ(m[0]["iqr_abs_increase"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(m[1]["mean_abs_increase"].get<double>(), 0.5);
    EXPECT_DOUBLE_EQ(m[1]["iqr_mse"].get<double>(), 0.0);

    EXPECT_DOUBLE_EQ(m[0]["ri"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(m[1]["ri"].get<double>(), (0.0 + 0.25 + 0.0) / 3.0);
    EXPECT_TRUE(m[2]["ri"].is_null());
    EXPECT_EQ(m[2]["mode"], "local");
    EXPECT_DOUBLE_EQ(m[2]["local_robustness"].get<double>(), 1.0);

    EXPECT_DOUBLE_EQ(m[0]["cci"].get<double>(), (0.25 + 1.0) / 2.0);
    EXPECT_DOUBLE_EQ(m[1]["cci"].get<double>(), (0.5 + 0.5) / 2.0);
    EXPECT_DOUBLE_EQ(m[2]["cci"].get<double>(), (1.0 + 0.25) / 2.0);
}

TEST(Cli, PerturbAtRateZeroIsIdentity) {
    const auto dir = scratch("perturb");
    SynthConfig c;
    c.length = 500;
    save_frame(dir / "series.csv", generate(c));
    std::string out;
    ASSERT_EQ(invoke({"perturb", "--input", (dir / "series.csv").string(), "--feature", "rain", "--kind", "outlier",
                      "--rate", "0", "--output", (dir / "out").string()},
                     &out),
              0);
    EXPECT_EQ(slurp(dir / "out" / "series.perturbed.csv"), slurp(dir / "series.csv"));
    EXPECT_EQ(slurp(dir / "out" / "series.mask.csv"), "channel,index,effective\n");
    const auto meta = json::parse(slurp(dir / "out" / "series.perturb.json"));
    EXPECT_EQ(meta["cells"], 0);
    EXPECT_EQ(meta["feature"], "rain");
}

TEST(Cli, PerturbWritesMask) {
    const auto dir = scratch("perturb_mask");
    SynthConfig c;
    c.length = 500;
    save_frame(dir / "series.csv", generate(c));
    ASSERT_EQ(invoke({"perturb", "--input", (dir / "series.csv").string(), "--kind", "missing", "--rate", "0.5",
                      "--seed", "4", "--output", dir.string()}),
              0);
    const auto frame = load_frame(dir / "series.perturbed.csv");
    const auto level = frame.column("level");
    std::size_t missing = 0;
    for (double v : level) missing += std::isnan(v);
    EXPECT_EQ(missing, 250u);
    std::istringstream mask(slurp(dir / "series.mask.csv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(mask, line)) ++rows;
    EXPECT_EQ(rows, 251u);
}

TEST(Cli, EndToEndRun) {
    const auto dir = scratch("run");
    write(dir / "config.yaml", kSmallConfig);
    std::string out, err;
    ASSERT_EQ(invoke({"run", "--config", (dir / "config.yaml").string(), "--output", (dir / "out").string(), "--jobs",
                      "2"},
                     &out, &err),
              0)
        << err;
    for (const char* name : {"mse_spread", "mse_peak", "mse_increase", "tradeoff"}) {
        EXPECT_TRUE(fs::exists(dir / "out" / "report" / (std::string(name) + ".svg"))) << name;
        EXPECT_TRUE(fs::exists(dir / "out" / "report" / (std::string(name) + ".csv"))) << name;
    }
    EXPECT_TRUE(fs::exists(dir / "out" / "dataset.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "models" / "manifest.json"));

    // 4 models x 2 trials x (1 clean + 2 features x 2 kinds x 1 rate)
    std::istringstream records(slurp(dir / "out" / "records.jsonl"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(records, line)) ++n;
    EXPECT_EQ(n, 4u * 2u * 5u);

    const auto indices = json::parse(slurp(dir / "out" / "indices.json"));
    EXPECT_EQ(indices["config_hash"], config_hash(parse_run_config(kSmallConfig)));
    EXPECT_EQ(indices["seed_base"], 11);
    ASSERT_EQ(indices["models"].size(), 4u);
    EXPECT_TRUE(indices["models"][3]["ri"].is_null());
    EXPECT_FALSE(indices["models"][1]["ri"].is_null());
}

TEST(Cli, BadConfigReportsJsonError) {
    const auto dir = scratch("bad");
    write(dir / "config.yaml", "models: [persistence]\nunknown_key: 3\n");
    std::string err;
    EXPECT_EQ(invoke({"run", "--config", (dir / "config.yaml").string(), "--output", dir.string()}, nullptr, &err), 1);
    const auto j = json::parse(err);
    EXPECT_EQ(j["error"]["exit"], 1);
    EXPECT_NE(j["error"]["message"].get<std::string>().find("unknown_key"), std::string::npos);

    EXPECT_EQ(invoke({"run"}, nullptr, &err), 1);
    EXPECT_EQ(invoke({"frobnicate"}, nullptr, &err), 1);
    EXPECT_TRUE(json::parse(err).contains("error"));
}

TEST(Cli, ExecutableExitStatus) {
    const auto dir = scratch("exe");
    write(dir / "config.yaml", "models: [persistence]\nn_seeds: 0\n");
    const std::string cmd = std::string(CSOEVAL_BIN_PATH) + " run --config " + (dir / "config.yaml").string() +
                            " --output " + dir.string() + " 2> " + (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 1);
    EXPECT_TRUE(json::parse(slurp(dir / "stderr.txt")).contains("error"));
    EXPECT_EQ(std::system((std::string(CSOEVAL_BIN_PATH) + " --help > /dev/null").c_str()), 0);
}

}  // namespace
}  // namespace csoeval::cli
