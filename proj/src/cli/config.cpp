#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "csoeval/cli.hpp"
#include "csoeval/error.hpp"
#include "csoeval/io.hpp"
#include "csoeval/rng.hpp"

namespace csoeval::cli {

namespace {

Error config_error(const std::string& what) { return Error(ErrorCode::invalid_argument, "config: " + what); }

void allow_keys(const YAML::Node& node, const std::string& where, std::initializer_list<std::string_view> keys) {
    if (!node.IsMap()) throw config_error(where + " must be a mapping");
    const std::set<std::string_view> allowed(keys);
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.contains(key)) throw config_error("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
    if (const auto v = node[key]) out = v.as<T>();
}

SynthConfig parse_synth(const YAML::Node& n) {
    allow_keys(n, "dataset.synth",
               {"length", "seed", "start", "rain_event_rate", "rain_shape", "rain_scale", "rain_max",
                "rain_decay_hours", "basin_capacity", "initial_level", "drain_rate", "runoff_gain", "noise_sd",
                "valve_threshold", "n_aux_channels", "forecast_noise_sd"});
    SynthConfig c;
    read(n, "length", c.length);
    read(n, "seed", c.seed);
    if (n["start"]) c.start = parse_timestamp(n["start"].as<std::string>());
    read(n, "rain_event_rate", c.rain_event_rate);
    read(n, "rain_shape", c.rain_shape);
    read(n, "rain_scale", c.rain_scale);
    read(n, "rain_max", c.rain_max);
    read(n, "rain_decay_hours", c.rain_decay_hours);
    read(n, "basin_capacity", c.basin_capacity);
    read(n, "initial_level", c.initial_level);
    read(n, "drain_rate", c.drain_rate);
    read(n, "runoff_gain", c.runoff_gain);
    read(n, "noise_sd", c.noise_sd);
    read(n, "valve_threshold", c.valve_threshold);
    read(n, "n_aux_channels", c.n_aux_channels);
    read(n, "forecast_noise_sd", c.forecast_noise_sd);
    validate(c);
    return c;
}

ErrorKind parse_kind(const YAML::Node& n) {
    if (n.IsScalar()) {
        const auto name = n.as<std::string>();
        if (name == "outlier") return OutlierError{};
        if (name == "missing") return MissingError{};
        if (name == "clip") return ClipError{};
        throw config_error("unknown error kind '" + name + "'");
    }
    allow_keys(n, "error_grid.kinds", {"kind", "alpha", "beta", "q_lower", "q_upper"});
    const auto name = n["kind"] ? n["kind"].as<std::string>() : std::string{};
    if (name == "outlier") {
        OutlierError e;
        read(n, "alpha", e.alpha);
        read(n, "beta", e.beta);
        return e;
    }
    if (name == "missing") return MissingError{};
    if (name == "clip") {
        ClipError e;
        read(n, "q_lower", e.q_lower);
        read(n, "q_upper", e.q_upper);
        return e;
    }
    throw config_error("unknown error kind '" + name + "'");
}

ModelEntry parse_model(const YAML::Node& n) {
    if (n.IsScalar()) return parse_model_label(n.as<std::string>());
    allow_keys(n, "models", {"name", "family", "mode", "plugin"});
    ModelEntry m;
    if (n["plugin"]) {
        m.family = Family::external_plugin;
        m.plugin_command = n["plugin"].as<std::vector<std::string>>();
        if (m.plugin_command.empty()) throw config_error("empty plugin command");
    } else {
        m.family = parse_family(n["family"] ? n["family"].as<std::string>() : std::string{});
    }
    if (n["mode"]) m.mode = parse_mode(n["mode"].as<std::string>());
    m.label = n["name"] ? n["name"].as<std::string>()
                        : std::string(family_name(m.family)) + (m.mode == Mode::local ? "@local" : "");
    return m;
}

void emit_kind(YAML::Emitter& out, const ErrorKind& kind) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "kind" << YAML::Value << std::string(kind_name(kind));
    if (const auto* o = std::get_if<OutlierError>(&kind))
        out << YAML::Key << "alpha" << YAML::Value << format_number(o->alpha) << YAML::Key << "beta" << YAML::Value
            << format_number(o->beta);
    if (const auto* c = std::get_if<ClipError>(&kind))
        out << YAML::Key << "q_lower" << YAML::Value << format_number(c->q_lower) << YAML::Key << "q_upper"
            << YAML::Value << format_number(c->q_upper);
    out << YAML::EndMap;
}

}  // namespace

ModelEntry parse_model_label(const std::string& label) {
    ModelEntry m;
    m.label = label;
    const auto at = label.find('@');
    m.family = parse_family(label.substr(0, at));
    if (m.family == Family::external_plugin) throw config_error("plugin models need a 'plugin' command");
    if (at != std::string::npos) m.mode = parse_mode(label.substr(at + 1));
    return m;
}

RunConfig parse_run_config(const std::string& yaml_text) {
    RunConfig cfg;
    try {
        const YAML::Node root = YAML::Load(yaml_text);
        if (!root || root.IsNull()) throw config_error("empty config");
        allow_keys(root, "config",
                   {"dataset", "split", "task", "models", "n_seeds", "seed_base", "train", "error_grid", "features",
                    "peak", "output_dir"});
        if (const auto ds = root["dataset"]) {
            allow_keys(ds, "dataset", {"synth", "path"});
            if (ds["synth"] && ds["path"]) throw config_error("dataset takes either 'synth' or 'path'");
            if (ds["path"])
                cfg.dataset = std::filesystem::path(ds["path"].as<std::string>());
            else
                cfg.dataset = ds["synth"] && !ds["synth"].IsNull() ? parse_synth(ds["synth"]) : SynthConfig{};
        }
        if (const auto sp = root["split"]) {
            allow_keys(sp, "split", {"train_end", "val_end"});
            if (sp["train_end"]) cfg.split.train_end = parse_timestamp(sp["train_end"].as<std::string>());
            if (sp["val_end"]) cfg.split.val_end = parse_timestamp(sp["val_end"].as<std::string>());
            if (!(cfg.split.train_end < cfg.split.val_end)) throw config_error("split.train_end must precede val_end");
        }
        if (const auto t = root["task"]) {
            allow_keys(t, "task", {"input_len", "horizon", "batch_size"});
            read(t, "input_len", cfg.task.input_len);
            read(t, "horizon", cfg.task.horizon);
            read(t, "batch_size", cfg.task.batch_size);
            if (cfg.task.input_len == 0 || cfg.task.horizon == 0 || cfg.task.batch_size == 0)
                throw config_error("task sizes must be positive");
        }
        cfg.train.batch_size = cfg.task.batch_size;
        if (const auto m = root["models"]) {
            if (!m.IsSequence()) throw config_error("models must be a list");
            for (const auto& entry : m) cfg.models.push_back(parse_model(entry));
        }
        if (cfg.models.empty()) throw config_error("no models");
        std::set<std::string> labels;
        for (const auto& m : cfg.models)
            if (!labels.insert(m.label).second) throw config_error("duplicate model label '" + m.label + "'");
        read(root, "n_seeds", cfg.n_seeds);
        if (cfg.n_seeds < 2) throw config_error("n_seeds must be at least 2");
        read(root, "seed_base", cfg.seed_base);
        if (const auto t = root["train"]) {
            allow_keys(t, "train",
                       {"max_epochs", "patience", "lr", "beta1", "beta2", "eps", "ridge_lambda", "hidden", "season"});
            read(t, "max_epochs", cfg.train.max_epochs);
            read(t, "patience", cfg.train.patience);
            read(t, "lr", cfg.train.adam.lr);
            read(t, "beta1", cfg.train.adam.beta1);
            read(t, "beta2", cfg.train.adam.beta2);
            read(t, "eps", cfg.train.adam.eps);
            read(t, "ridge_lambda", cfg.train.ridge_lambda);
            read(t, "hidden", cfg.train.hidden);
            read(t, "season", cfg.train.season);
        }
        if (const auto g = root["error_grid"]) {
            allow_keys(g, "error_grid", {"kinds", "rates", "cluster_mean_len", "fences"});
            if (g["kinds"]) {
                cfg.kinds.clear();
                for (const auto& k : g["kinds"]) cfg.kinds.push_back(parse_kind(k));
            }
            read(g, "rates", cfg.rates);
            read(g, "cluster_mean_len", cfg.cluster_mean_len);
            if (const auto f = g["fences"]) {
                const auto from = f.as<std::string>();
                if (from != "test" && from != "train") throw config_error("error_grid.fences must be test or train");
                cfg.fences_from_train = from == "train";
            }
        }
        for (double r : cfg.rates)
            if (!(r > 0.0 && r <= 1.0)) throw config_error("error rates must lie in (0, 1]");
        for (const auto& k : cfg.kinds) {
            ErrorSpec probe;
            probe.kind = k;
            probe.cluster_mean_len = cfg.cluster_mean_len;
            validate(probe);
        }
        read(root, "features", cfg.features);
        if (const auto p = root["peak"]) {
            allow_keys(p, "peak", {"window", "top_fraction", "absolute"});
            read(p, "window", cfg.peak.window);
            read(p, "top_fraction", cfg.peak.top_fraction);
            read(p, "absolute", cfg.peak.absolute);
        }
        if (const auto o = root["output_dir"]) cfg.output_dir = o.as<std::string>();
    } catch (const YAML::Exception& e) {
        throw Error(ErrorCode::parse, std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
    if (const auto* path = std::get_if<std::filesystem::path>(&cfg.dataset)) {
        out << YAML::Key << "path" << YAML::Value << path->string();
    } else {
        const auto& s = std::get<SynthConfig>(cfg.dataset);
        out << YAML::Key << "synth" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "length" << YAML::Value << s.length;
        out << YAML::Key << "seed" << YAML::Value << s.seed;
        out << YAML::Key << "start" << YAML::Value << format_timestamp(s.start);
        const std::pair<const char*, double> reals[] = {
            {"rain_event_rate", s.rain_event_rate}, {"rain_shape", s.rain_shape},
            {"rain_scale", s.rain_scale},           {"rain_max", s.rain_max},
            {"rain_decay_hours", s.rain_decay_hours}, {"basin_capacity", s.basin_capacity},
            {"initial_level", s.initial_level},     {"drain_rate", s.drain_rate},
            {"runoff_gain", s.runoff_gain},         {"noise_sd", s.noise_sd},
            {"valve_threshold", s.valve_threshold}, {"forecast_noise_sd", s.forecast_noise_sd}};
        for (const auto& [k, v] : reals) out << YAML::Key << k << YAML::Value << format_number(v);
        out << YAML::Key << "n_aux_channels" << YAML::Value << s.n_aux_channels;
        out << YAML::EndMap;
    }
    out << YAML::EndMap;
    out << YAML::Key << "split" << YAML::Value << YAML::BeginMap << YAML::Key << "train_end" << YAML::Value
        << format_timestamp(cfg.split.train_end) << YAML::Key << "val_end" << YAML::Value
        << format_timestamp(cfg.split.val_end) << YAML::EndMap;
    out << YAML::Key << "task" << YAML::Value << YAML::BeginMap << YAML::Key << "input_len" << YAML::Value
        << cfg.task.input_len << YAML::Key << "horizon" << YAML::Value << cfg.task.horizon << YAML::Key
        << "batch_size" << YAML::Value << cfg.task.batch_size << YAML::EndMap;
    out << YAML::Key << "models" << YAML::Value << YAML::BeginSeq;
    for (const auto& m : cfg.models) {
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << m.label;
        if (m.family == Family::external_plugin)
            out << YAML::Key << "plugin" << YAML::Value << YAML::Flow << m.plugin_command;
        else
            out << YAML::Key << "family" << YAML::Value << std::string(family_name(m.family));
        out << YAML::Key << "mode" << YAML::Value << std::string(mode_name(m.mode)) << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "n_seeds" << YAML::Value << cfg.n_seeds;
    out << YAML::Key << "seed_base" << YAML::Value << cfg.seed_base;
    const auto& t = cfg.train;
    out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "max_epochs" << YAML::Value << t.max_epochs;
    out << YAML::Key << "patience" << YAML::Value << t.patience;
    out << YAML::Key << "lr" << YAML::Value << format_number(t.adam.lr);
    out << YAML::Key << "beta1" << YAML::Value << format_number(t.adam.beta1);
    out << YAML::Key << "beta2" << YAML::Value << format_number(t.adam.beta2);
    out << YAML::Key << "eps" << YAML::Value << format_number(t.adam.eps);
    out << YAML::Key << "ridge_lambda" << YAML::Value << format_number(t.ridge_lambda);
    out << YAML::Key << "hidden" << YAML::Value << t.hidden;
    out << YAML::Key << "season" << YAML::Value << t.season;
    out << YAML::EndMap;
    out << YAML::Key << "error_grid" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "kinds" << YAML::Value << YAML::BeginSeq;
    for (const auto& k : cfg.kinds) emit_kind(out, k);
    out << YAML::EndSeq;
    out << YAML::Key << "rates" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double r : cfg.rates) out << format_number(r);
    out << YAML::EndSeq;
    out << YAML::Key << "cluster_mean_len" << YAML::Value << cfg.cluster_mean_len;
    out << YAML::Key << "fences" << YAML::Value << (cfg.fences_from_train ? "train" : "test");
    out << YAML::EndMap;
    out << YAML::Key << "features" << YAML::Value << YAML::Flow << cfg.features;
    out << YAML::Key << "peak" << YAML::Value << YAML::BeginMap << YAML::Key << "window" << YAML::Value
        << cfg.peak.window << YAML::Key << "top_fraction" << YAML::Value << format_number(cfg.peak.top_fraction)
        << YAML::Key << "absolute" << YAML::Value << cfg.peak.absolute << YAML::EndMap;
    // output_dir is deliberately left out: moving a run does not change it.
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(dump_run_config(cfg))));
    return buf;
}

std::uint64_t trial_seed(std::uint64_t seed_base, std::size_t k) {
    return derive_seed(derive_seed(seed_base, "train"), static_cast<std::uint64_t>(k));
}

}  // namespace csoeval::cli
