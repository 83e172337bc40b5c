#include "csoeval/io.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "csoeval/error.hpp"

namespace csoeval {

std::string format_number(double v) {
    if (is_missing(v)) return {};
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error(ErrorCode::invalid_argument, "unformattable number");
    return std::string(buf, ptr);
}

double parse_number(std::string_view text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v))
        throw Error(ErrorCode::parse, "bad number '" + std::string(text) + "'");
    return v;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::string_view chomp(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

}  // namespace

TimeSeriesFrame read_csv(std::istream& in, const Schema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::parse, "missing header row");
    const auto header = split_fields(chomp(line));
    if (header.empty() || header.front() != "timestamp")
        throw Error(ErrorCode::parse, "first column must be 'timestamp'");

    std::vector<ChannelSpec> channels;
    for (std::size_t i = 1; i < header.size(); ++i) {
        ChannelSpec spec{std::string(header[i]), Role::past_covariate, {}, {}};
        for (const auto& s : schema.channels)
            if (s.name == spec.name) spec = s;
        channels.push_back(std::move(spec));
    }

    std::vector<std::vector<double>> columns(channels.size());
    std::optional<Timestamp> start;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        const auto text = chomp(line);
        if (text.empty()) continue;
        const auto fields = split_fields(text);
        if (fields.size() != header.size())
            throw Error(ErrorCode::parse, "row " + std::to_string(row + 1) + " has wrong field count");
        const Timestamp t = parse_timestamp(fields[0]);
        if (!start) start = t;
        if (t != *start + schema.step * static_cast<long long>(row))
            throw Error(ErrorCode::parse, "row " + std::to_string(row + 1) + " breaks the uniform time grid");
        for (std::size_t c = 0; c < channels.size(); ++c)
            columns[c].push_back(fields[c + 1].empty() ? kMissing : parse_number(fields[c + 1]));
        ++row;
    }
    if (!start) throw Error(ErrorCode::no_data, "csv has no rows");
    return TimeSeriesFrame(*start, schema.step, std::move(channels), std::move(columns));
}

void write_csv(std::ostream& out, const TimeSeriesFrame& frame) {
    out << "timestamp";
    for (const auto& spec : frame.channels()) out << ',' << spec.name;
    out << '\n';
    for (std::size_t t = 0; t < frame.length(); ++t) {
        out << format_timestamp(frame.time(t));
        for (std::size_t c = 0; c < frame.channel_count(); ++c) out << ',' << format_number(frame.at(t, c));
        out << '\n';
    }
}

TimeSeriesFrame read_csv(const std::filesystem::path& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    return read_csv(in, schema);
}

void write_csv(const std::filesystem::path& path, const TimeSeriesFrame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    write_csv(out, frame);
}

Schema schema_of(const TimeSeriesFrame& frame) { return {frame.step(), frame.channels()}; }

Schema parse_schema(const std::string& yaml_text) {
    Schema schema;
    try {
        const YAML::Node root = YAML::Load(yaml_text);
        if (root["step_seconds"]) schema.step = Seconds{root["step_seconds"].as<long long>()};
        for (const auto& node : root["channels"]) {
            ChannelSpec spec;
            spec.name = node["name"].as<std::string>();
            if (node["role"]) spec.role = parse_role(node["role"].as<std::string>());
            if (node["unit"]) spec.unit = node["unit"].as<std::string>();
            if (node["source"]) spec.source = node["source"].as<std::string>();
            schema.channels.push_back(std::move(spec));
        }
    } catch (const YAML::Exception& e) {
        throw Error(ErrorCode::parse, std::string("schema: ") + e.what());
    }
    return schema;
}

Schema read_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_schema(ss.str());
}

std::string dump_schema(const Schema& schema) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "step_seconds" << YAML::Value << schema.step.count();
    out << YAML::Key << "channels" << YAML::Value << YAML::BeginSeq;
    for (const auto& spec : schema.channels) {
        out << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << spec.name;
        out << YAML::Key << "role" << YAML::Value << std::string(role_name(spec.role));
        if (!spec.unit.empty()) out << YAML::Key << "unit" << YAML::Value << spec.unit;
        if (!spec.source.empty()) out << YAML::Key << "source" << YAML::Value << spec.source;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void write_schema(const std::filesystem::path& path, const Schema& schema) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << dump_schema(schema);
}

std::filesystem::path schema_path_for(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension(".schema.yaml");
    return p;
}

TimeSeriesFrame load_frame(const std::filesystem::path& csv) {
    const auto sidecar = schema_path_for(csv);
    const Schema schema = std::filesystem::exists(sidecar) ? read_schema(sidecar) : Schema{};
    return read_csv(csv, schema);
}

void save_frame(const std::filesystem::path& csv, const TimeSeriesFrame& frame) {
    write_csv(csv, frame);
    write_schema(schema_path_for(csv), schema_of(frame));
}

}  // namespace csoeval
