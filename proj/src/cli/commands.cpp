#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "csoeval/cli.hpp"
#include "csoeval/error.hpp"
#include "csoeval/io.hpp"
#include "csoeval/parallel.hpp"
#include "csoeval/plugin.hpp"
#include "csoeval/rng.hpp"
#include "json.hpp"
#include "report.hpp"

namespace csoeval::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Flags shared by the subcommands.
struct Options {
    std::string config;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed_base;
    std::string output;
};

struct Context {
    RunConfig cfg;
    std::string hash;
    fs::path out;
    std::size_t jobs = 1;
};

fs::path default_output() {
    if (const char* env = std::getenv("CSOEVAL_OUTPUT"); env && *env) return env;
    return "csoeval-out";
}

fs::path resolve_output(const Options& opt, const RunConfig* cfg) {
    if (!opt.output.empty()) return opt.output;
    if (cfg && cfg->output_dir) return *cfg->output_dir;
    return default_output();
}

Context make_context(const Options& opt) {
    if (opt.config.empty()) throw Error(ErrorCode::invalid_argument, "--config is required");
    Context ctx;
    ctx.cfg = load_run_config(opt.config);
    if (auto* path = std::get_if<fs::path>(&ctx.cfg.dataset); path && path->is_relative())
        *path = fs::path(opt.config).parent_path() / *path;
    if (opt.seed_base) ctx.cfg.seed_base = *opt.seed_base;
    ctx.hash = config_hash(ctx.cfg);
    ctx.out = resolve_output(opt, &ctx.cfg);
    ctx.jobs = std::max<std::size_t>(opt.jobs, 1);
    fs::create_directories(ctx.out);
    return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, path.string() + ": " + e.what());
    }
}

/// Dataset of the run: generated from the synth section or read from disk.
/// Channels with gaps are interpolated (with indicators) before splitting.
TimeSeriesFrame load_dataset(const RunConfig& cfg) {
    TimeSeriesFrame frame = std::holds_alternative<SynthConfig>(cfg.dataset)
                                ? generate(std::get<SynthConfig>(cfg.dataset))
                                : load_frame(std::get<fs::path>(cfg.dataset));
    std::vector<std::string> gappy;
    for (std::size_t c = 0; c < frame.channel_count(); ++c) {
        if (frame.channel(c).role == Role::imputation_indicator) continue;
        const auto col = frame.column(c);
        if (std::any_of(col.begin(), col.end(), is_missing)) gappy.push_back(frame.channel(c).name);
    }
    return gappy.empty() ? frame : interpolate_missing(frame, gappy);
}

ForecastTask task_for(const RunConfig& cfg, Mode mode) {
    ForecastTask t = cfg.task;
    t.mode = mode;
    return t;
}

fs::path model_path(const fs::path& out, const std::string& label, std::size_t k) {
    return out / "models" / label / ("seed_" + std::to_string(k) + ".bin");
}

std::vector<std::string> default_features(const TimeSeriesFrame& frame) {
    std::vector<std::string> out;
    const std::string placeholder = placeholder_name(frame);
    for (const auto& spec : frame.channels())
        if (spec.role != Role::imputation_indicator && spec.name != placeholder) out.push_back(spec.name);
    return out;
}

// ---- stages ----------------------------------------------------------------

void stage_synth(const Context& ctx, std::ostream& out) {
    const auto* synth = std::get_if<SynthConfig>(&ctx.cfg.dataset);
    if (!synth) throw Error(ErrorCode::invalid_argument, "config dataset is a path, not a synth section");
    const auto frame = generate(*synth);
    save_frame(ctx.out / "dataset.csv", frame);
    write_text(ctx.out / "dataset.json",
               json{{"config_hash", ctx.hash}, {"seed", synth->seed}, {"rows", frame.length()}}.dump(2) + "\n");
    out << "wrote " << (ctx.out / "dataset.csv").string() << " (" << frame.length() << " rows)\n";
}

void stage_train(const Context& ctx, std::ostream& out) {
    const auto& cfg = ctx.cfg;
    const auto seg = split(load_dataset(cfg), cfg.split);

    std::map<Mode, std::pair<WindowSet, WindowSet>> windows;
    std::map<Mode, WindowSet> probes;
    for (const auto& m : cfg.models)
        if (!windows.contains(m.mode)) {
            const auto task = task_for(cfg, m.mode);
            windows.emplace(m.mode, std::pair{build_windows(seg.train, task), build_windows(seg.val, task)});
            probes.emplace(m.mode, build_windows(seg.test, task));
        }

    struct Job {
        std::size_t model, trial;
    };
    std::vector<Job> jobs;
    for (std::size_t m = 0; m < cfg.models.size(); ++m)
        for (std::size_t k = 0; k < cfg.n_seeds; ++k) jobs.push_back({m, k});
    std::vector<ForecasterHandle> fitted(jobs.size());
    std::vector<FitReport> reports(jobs.size());

    parallel_for(jobs.size(), ctx.jobs, [&](std::size_t j) {
        const auto& entry = cfg.models[jobs[j].model];
        const std::uint64_t seed = trial_seed(cfg.seed_base, jobs[j].trial);
        const auto& [train, val] = windows.at(entry.mode);
        if (entry.family == Family::external_plugin) {
            PluginClient client(entry.plugin_command);
            const auto caps = client.handshake();
            client.close();
            fitted[j] = ForecasterHandle::plugin(entry.plugin_command, train.layout, caps.model_size_bytes, seed);
            return;
        }
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        fitted[j] = fit(entry.family, train, val, tc, &reports[j]);
    });

    json manifest{{"config_hash", ctx.hash}, {"seed_base", cfg.seed_base}, {"models", json::array()}};
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        const auto& entry = cfg.models[jobs[j].model];
        const auto path = model_path(ctx.out, entry.label, jobs[j].trial);
        fs::create_directories(path.parent_path());
        const auto bytes = fitted[j].serialize();
        write_text(path, std::string(bytes.begin(), bytes.end()));
        json log{{"config_hash", ctx.hash},
                 {"model_type", entry.label},
                 {"trial", jobs[j].trial},
                 {"seed", fitted[j].seed()},
                 {"best_epoch", reports[j].best_epoch},
                 {"train_loss", reports[j].train_loss},
                 {"val_mse", reports[j].val_mse}};
        write_text(path.parent_path() / ("seed_" + std::to_string(jobs[j].trial) + ".json"), log.dump() + "\n");
    }
    for (const auto& entry : cfg.models)
        manifest["models"].push_back(
            {{"model_type", entry.label}, {"mode", mode_name(entry.mode)}, {"trials", cfg.n_seeds}});
    write_text(ctx.out / "models" / "manifest.json", manifest.dump(2) + "\n");

    // Complexity of the first trial of every model type on the test windows.
    std::ofstream cx(ctx.out / "complexity.jsonl");
    if (!cx) throw Error(ErrorCode::io, "cannot write complexity.jsonl");
    for (std::size_t m = 0; m < cfg.models.size(); ++m) {
        const auto& entry = cfg.models[m];
        const auto c = measure_complexity(fitted[m * cfg.n_seeds], probes.at(entry.mode));
        cx << json{{"config_hash", ctx.hash},
                   {"model_type", entry.label},
                   {"mode", mode_name(entry.mode)},
                   {"seed", fitted[m * cfg.n_seeds].seed()},
                   {"inference_seconds", c.inference_seconds},
                   {"size_bytes", c.size_bytes},
                   {"param_count", c.param_count}}
                  .dump()
           << '\n';
    }
    out << "trained " << jobs.size() << " models into " << (ctx.out / "models").string() << '\n';
}

std::vector<ModelTrials> load_models(const Context& ctx) {
    const auto manifest_path = ctx.out / "models" / "manifest.json";
    if (!fs::exists(manifest_path)) throw Error(ErrorCode::io, "no trained models in " + ctx.out.string());
    const json manifest = parse_json_file(manifest_path);
    if (manifest.value("config_hash", std::string{}) != ctx.hash)
        throw Error(ErrorCode::schema_mismatch, "models were trained with a different config; rerun train");
    std::vector<ModelTrials> models;
    for (const auto& entry : ctx.cfg.models) {
        ModelTrials mt{entry.label, {}};
        for (std::size_t k = 0; k < ctx.cfg.n_seeds; ++k) {
            const auto text = read_text(model_path(ctx.out, entry.label, k));
            mt.trials.push_back(ForecasterHandle::deserialize(
                std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())));
        }
        models.push_back(std::move(mt));
    }
    return models;
}

void stage_evaluate(const Context& ctx, std::ostream& out) {
    const auto& cfg = ctx.cfg;
    const auto models = load_models(ctx);
    const auto seg = split(load_dataset(cfg), cfg.split);
    SweepConfig sweep;
    sweep.features = cfg.features.empty() ? default_features(seg.test) : cfg.features;
    sweep.kinds = cfg.kinds;
    sweep.rates = cfg.rates;
    sweep.seed_base = cfg.seed_base;
    sweep.cluster_mean_len = cfg.cluster_mean_len;
    sweep.peak = cfg.peak;
    sweep.jobs = ctx.jobs;
    if (cfg.fences_from_train) sweep.reference = &seg.train;
    const auto records = robustness_sweep(models, seg.test, cfg.task, sweep);
    std::ofstream file(ctx.out / "records.jsonl", std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot write records.jsonl");
    write_records(file, records, ctx.hash);
    std::size_t failed = 0;
    for (const auto& r : records) failed += !r.ok;
    out << "wrote " << records.size() << " records (" << failed << " failed cells) to "
        << (ctx.out / "records.jsonl").string() << '\n';
}

struct Loaded {
    std::vector<EvalRecord> records;
    std::map<std::string, CciInput> complexity;
    std::string hash;
    std::uint64_t seed_base = 0;
};

Loaded load_results(const fs::path& records_path, const fs::path& complexity_path) {
    Loaded l;
    std::ifstream in(records_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + records_path.string());
    std::string first;
    std::getline(in, first);
    if (!first.empty()) {
        try {
            l.hash = json::parse(first).value("config_hash", std::string{});
        } catch (const json::exception& e) {
            throw Error(ErrorCode::parse, records_path.string() + ": " + e.what());
        }
    }
    in.clear();
    in.seekg(0);
    l.records = read_records(in);
    if (l.records.empty()) throw Error(ErrorCode::empty_evaluation_set, records_path.string() + " has no records");

    if (!complexity_path.empty() && fs::exists(complexity_path)) {
        std::ifstream cx(complexity_path);
        std::string line;
        while (std::getline(cx, line)) {
            if (line.empty()) continue;
            try {
                const json j = json::parse(line);
                l.complexity[j.at("model_type").get<std::string>()] = {j.at("inference_seconds").get<double>(),
                                                                       j.at("size_bytes").get<double>()};
            } catch (const json::exception& e) {
                throw Error(ErrorCode::parse, complexity_path.string() + ": " + e.what());
            }
        }
    }
    return l;
}

json indices_json(const std::vector<TradeoffIndices>& rows, const Loaded& l) {
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    const auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json models = json::array();
    for (const auto& r : rows) {
        json m{{"model_type", r.model_type},
               {"mode", mode_name(r.mode)},
               {"trials", r.trials},
               {"median_mse", r.median_mse},
               {"iqr_mse", r.iqr_mse},
               {"median_mse_peak", finite(r.median_mse_peak)},
               {"mean_abs_increase", r.robustness.mean_abs_increase},
               {"iqr_abs_increase", r.robustness.iqr_abs_increase},
               {"ri", opt(r.ri)},
               {"cci", opt(r.cci)}};
        if (r.complexity) {
            m["inference_seconds"] = r.complexity->inference_seconds;
            m["size_bytes"] = r.complexity->size_bytes;
        }
        if (r.mode == Mode::local) m["local_robustness"] = r.iqr_mse;
        models.push_back(std::move(m));
    }
    return json{{"config_hash", l.hash}, {"seed_base", l.seed_base}, {"models", std::move(models)}};
}

struct ResultPaths {
    fs::path records, complexity, out;
};

ResultPaths result_paths(const Options& opt, const std::string& records, const std::string& complexity) {
    const fs::path dir = opt.config.empty() ? resolve_output(opt, nullptr) : make_context(opt).out;
    ResultPaths p;
    p.out = dir;
    p.records = records.empty() ? dir / "records.jsonl" : fs::path(records);
    p.complexity = complexity.empty() ? dir / "complexity.jsonl" : fs::path(complexity);
    fs::create_directories(dir);
    return p;
}

void stage_indices(const ResultPaths& p, std::optional<std::uint64_t> seed_base, std::ostream& out) {
    auto loaded = load_results(p.records, p.complexity);
    if (seed_base) loaded.seed_base = *seed_base;
    const auto rows = tradeoff_indices(loaded.records, loaded.complexity);
    write_text(p.out / "indices.json", indices_json(rows, loaded).dump(2) + "\n");
    out << "wrote " << (p.out / "indices.json").string() << '\n';
}

void stage_report(const ResultPaths& p, std::optional<std::uint64_t> seed_base, std::ostream& out) {
    auto loaded = load_results(p.records, p.complexity);
    if (seed_base) loaded.seed_base = *seed_base;
    const auto rows = tradeoff_indices(loaded.records, loaded.complexity);
    const auto files = write_report(p.out / "report", loaded.records, rows, {loaded.hash, loaded.seed_base});
    out << "wrote " << files.size() << " report files to " << (p.out / "report").string() << '\n';
}

struct PerturbOptions {
    std::string input;
    std::string feature;
    std::string kind = "outlier";
    double rate = 0.1;
    std::uint64_t seed = 0;
    std::size_t cluster_len = 24;
    double alpha = 1.1, beta = 0.1, q_lower = 0.2, q_upper = 0.8;
};

void stage_perturb(const Options& opt, const PerturbOptions& p, std::ostream& out) {
    if (p.input.empty()) throw Error(ErrorCode::invalid_argument, "--input is required");
    const fs::path dir = resolve_output(opt, nullptr);
    fs::create_directories(dir);
    const auto frame = load_frame(p.input);
    ErrorSpec spec;
    if (p.kind == "outlier")
        spec.kind = OutlierError{p.alpha, p.beta};
    else if (p.kind == "missing")
        spec.kind = MissingError{};
    else if (p.kind == "clip")
        spec.kind = ClipError{p.q_lower, p.q_upper};
    else
        throw Error(ErrorCode::invalid_argument, "unknown error kind '" + p.kind + "'");
    spec.rate = p.rate;
    spec.cluster_mean_len = p.cluster_len;
    spec.seed = opt.seed_base ? derive_seed(*opt.seed_base, p.seed) : p.seed;
    const auto feature = p.feature.empty() ? frame.channel(frame.target_index()).name : p.feature;
    const auto result = perturb(frame, feature, spec);

    const fs::path stem = dir / fs::path(p.input).stem();
    const fs::path csv = stem.string() + ".perturbed.csv";
    const fs::path mask = stem.string() + ".mask.csv";
    save_frame(csv, result.frame);
    std::ofstream mask_out(mask, std::ios::binary);
    write_mask_csv(mask_out, std::span(&result.mask, 1));
    json meta{{"input", p.input},
              {"feature", feature},
              {"error_kind", kind_name(spec.kind)},
              {"error_rate", spec.rate},
              {"cluster_mean_len", spec.cluster_mean_len},
              {"seed", spec.seed},
              {"effective_rate", result.mask.effective_rate()},
              {"cells", result.mask.indices.size()}};
    meta["config_hash"] = [&] {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(meta.dump())));
        return std::string(buf);
    }();
    write_text(stem.string() + ".perturb.json", meta.dump(2) + "\n");
    out << "perturbed " << result.mask.indices.size() << " cells of " << feature << " -> " << csv.string() << '\n';
}

/// {"error": {...}} on one line; exit 1 for library and usage errors, 2 otherwise.
int report_failure(std::ostream& err, const std::string& stage, const std::string& code, const std::string& message,
                   int status) {
    err << json{{"error", {{"stage", stage}, {"code", code}, {"message", message}, {"exit", status}}}}.dump() << '\n';
    return status;
}

std::string code_slug(ErrorCode code) {
    std::string s(error_code_text(code));
    std::replace(s.begin(), s.end(), ' ', '_');
    std::replace(s.begin(), s.end(), '-', '_');
    return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Robustness and trade-off evaluation of sewer-level forecasters", "csoeval"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed_base_value = 0;
    const auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) sub->add_option("--config", opt.config, "run config (YAML)");
        sub->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed-base", seed_base_value, "override the config's seed_base");
        sub->add_option("--output", opt.output, "output directory (default: config output_dir, $CSOEVAL_OUTPUT)");
    };

    auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
    add_common(synth, true);
    auto* perturb_cmd = app.add_subcommand("perturb", "corrupt one channel of a CSV frame");
    add_common(perturb_cmd, false);
    PerturbOptions popt;
    perturb_cmd->add_option("--input", popt.input, "frame CSV (schema sidecar next to it)")->required();
    perturb_cmd->add_option("--feature", popt.feature, "channel to corrupt (default: target)");
    perturb_cmd->add_option("--kind", popt.kind, "outlier | missing | clip");
    perturb_cmd->add_option("--rate", popt.rate, "fraction of cells");
    perturb_cmd->add_option("--seed", popt.seed, "corruption seed");
    perturb_cmd->add_option("--cluster-len", popt.cluster_len, "mean run length");
    perturb_cmd->add_option("--alpha", popt.alpha);
    perturb_cmd->add_option("--beta", popt.beta);
    perturb_cmd->add_option("--q-lower", popt.q_lower);
    perturb_cmd->add_option("--q-upper", popt.q_upper);
    auto* train = app.add_subcommand("train", "fit every model for every seed");
    add_common(train, true);
    auto* evaluate = app.add_subcommand("evaluate", "run the robustness sweep");
    add_common(evaluate, true);
    std::string records_path, complexity_path;
    auto* indices = app.add_subcommand("indices", "consistency, RI and CCI from a record file");
    add_common(indices, true);
    indices->add_option("--records", records_path, "records JSONL (default: <output>/records.jsonl)");
    indices->add_option("--complexity", complexity_path, "complexity JSONL (default: <output>/complexity.jsonl)");
    auto* report = app.add_subcommand("report", "render figures as SVG + CSV");
    add_common(report, true);
    report->add_option("--records", records_path, "records JSONL (default: <output>/records.jsonl)");
    report->add_option("--complexity", complexity_path, "complexity JSONL (default: <output>/complexity.jsonl)");
    auto* all = app.add_subcommand("run", "synth (if configured), train, evaluate, indices, report");
    add_common(all, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        return report_failure(err, "args", "usage", e.what(), 1);
    }
    for (auto* sub : app.get_subcommands())
        if (sub->count("--seed-base")) opt.seed_base = seed_base_value;

    std::string stage = app.get_subcommands().front()->get_name();
    try {
        if (synth->parsed()) {
            stage_synth(make_context(opt), out);
        } else if (perturb_cmd->parsed()) {
            stage_perturb(opt, popt, out);
        } else if (train->parsed()) {
            stage_train(make_context(opt), out);
        } else if (evaluate->parsed()) {
            stage_evaluate(make_context(opt), out);
        } else if (indices->parsed()) {
            const auto p = result_paths(opt, records_path, complexity_path);
            std::optional<std::uint64_t> sb = opt.seed_base;
            if (!opt.config.empty() && !sb) sb = make_context(opt).cfg.seed_base;
            stage_indices(p, sb, out);
        } else if (report->parsed()) {
            const auto p = result_paths(opt, records_path, complexity_path);
            std::optional<std::uint64_t> sb = opt.seed_base;
            if (!opt.config.empty() && !sb) sb = make_context(opt).cfg.seed_base;
            stage_report(p, sb, out);
        } else if (all->parsed()) {
            const auto ctx = make_context(opt);
            if (std::holds_alternative<SynthConfig>(ctx.cfg.dataset)) {
                stage = "synth";
                stage_synth(ctx, out);
            }
            stage = "train";
            stage_train(ctx, out);
            stage = "evaluate";
            stage_evaluate(ctx, out);
            const ResultPaths p{ctx.out / "records.jsonl", ctx.out / "complexity.jsonl", ctx.out};
            stage = "indices";
            stage_indices(p, ctx.cfg.seed_base, out);
            stage = "report";
            stage_report(p, ctx.cfg.seed_base, out);
        }
    } catch (const Error& e) {
        return report_failure(err, stage, code_slug(e.code()), e.what(), 1);
    } catch (const fs::filesystem_error& e) {
        return report_failure(err, stage, "io", e.what(), 1);
    } catch (const std::exception& e) {
        return report_failure(err, stage, "internal", e.what(), 2);
    }
    return 0;
}

}  // namespace csoeval::cli
