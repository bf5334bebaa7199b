#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cass/cli.hpp"
#include "cass/errors.hpp"

namespace cass::cli {
namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a number");
    return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a non-negative integer");
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    bad_value(key, value, "true or false");
}

std::pair<std::size_t, std::size_t> to_range(const std::string& key, std::string value) {
    std::replace(value.begin(), value.end(), ',', ' ');
    value.erase(std::remove_if(value.begin(), value.end(), [](char c) { return c == '[' || c == ']'; }), value.end());
    std::istringstream ss(value);
    std::string lo, hi, rest;
    if (!(ss >> lo >> hi) || (ss >> rest)) bad_value(key, value, "two integers 'min, max'");
    return {to_uint(key, lo), to_uint(key, hi)};
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto size = [&](const char* k, auto field) {
            t[k] = [field](RunConfig& c, const std::string& key, const std::string& v) { field(c) = to_uint(key, v); };
        };
        auto real = [&](const char* k, auto field) {
            t[k] = [field](RunConfig& c, const std::string& key, const std::string& v) { field(c) = to_double(key, v); };
        };
        auto flag = [&](const char* k, auto field) {
            t[k] = [field](RunConfig& c, const std::string& key, const std::string& v) { field(c) = to_bool(key, v); };
        };
        auto range = [&](const char* k, auto field) {
            t[k] = [field](RunConfig& c, const std::string& key, const std::string& v) { field(c) = to_range(key, v); };
        };
        size("encoder.channels", [](RunConfig& c) -> auto& { return c.train.encoder.channels; });
        size("encoder.length", [](RunConfig& c) -> auto& { return c.train.encoder.length; });
        size("encoder.width", [](RunConfig& c) -> auto& { return c.train.encoder.width; });
        size("encoder.layers", [](RunConfig& c) -> auto& { return c.train.encoder.layers; });
        size("encoder.heads", [](RunConfig& c) -> auto& { return c.train.encoder.heads; });
        real("encoder.dropout", [](RunConfig& c) -> auto& { return c.train.encoder.dropout; });
        t["encoder.variant"] = [](RunConfig& c, const std::string&, const std::string& v) { c.train.encoder.variant = parse_variant(v); };
        real("weights.alpha1", [](RunConfig& c) -> auto& { return c.train.weights.alpha1; });
        real("weights.alpha2", [](RunConfig& c) -> auto& { return c.train.weights.alpha2; });
        real("weights.tau", [](RunConfig& c) -> auto& { return c.train.weights.tau; });
        size("k_ntp", [](RunConfig& c) -> auto& { return c.train.k_ntp; });
        real("aug.jitter_sigma", [](RunConfig& c) -> auto& { return c.train.aug.jitter_sigma; });
        range("aug.interval_count_range", [](RunConfig& c) -> auto& { return c.train.aug.interval_count_range; });
        range("aug.segment_count_range", [](RunConfig& c) -> auto& { return c.train.aug.segment_count_range; });
        size("aug.rng_seed", [](RunConfig& c) -> auto& { return c.train.aug.rng_seed; });
        real("pretrain_lr", [](RunConfig& c) -> auto& { return c.train.pretrain_lr; });
        real("probe_lr", [](RunConfig& c) -> auto& { return c.train.probe_lr; });
        real("supervised_lr", [](RunConfig& c) -> auto& { return c.train.supervised_lr; });
        size("pretrain_batch", [](RunConfig& c) -> auto& { return c.train.pretrain_batch; });
        size("probe_batch", [](RunConfig& c) -> auto& { return c.train.probe_batch; });
        size("pretrain_epochs", [](RunConfig& c) -> auto& { return c.train.pretrain_epochs; });
        size("probe_epochs", [](RunConfig& c) -> auto& { return c.train.probe_epochs; });
        size("patience", [](RunConfig& c) -> auto& { return c.train.patience; });
        size("seed", [](RunConfig& c) -> auto& { return c.train.seed; });
        flag("ablation.no_ntp", [](RunConfig& c) -> auto& { return c.train.ablation.no_ntp; });
        flag("ablation.no_cs", [](RunConfig& c) -> auto& { return c.train.ablation.no_cs; });
        flag("ablation.no_neg_augment", [](RunConfig& c) -> auto& { return c.train.ablation.no_neg_augment; });
        flag("ablation.reverse_neg", [](RunConfig& c) -> auto& { return c.train.ablation.reverse_neg; });
        flag("ablation.use_nvp", [](RunConfig& c) -> auto& { return c.train.ablation.use_nvp; });
        t["data.format"] = [](RunConfig& c, const std::string& key, const std::string& v) {
            if (v != "auto" && v != "ts" && v != "csv") bad_value(key, v, "auto, ts or csv");
            c.data.format = v;
        };
        size("data.csv_channels", [](RunConfig& c) -> auto& { return c.data.csv_channels; });
        t["data.csv_layout"] = [](RunConfig& c, const std::string& key, const std::string& v) {
            if (v == "flat") c.data.csv_layout = CsvLayout::Flat;
            else if (v == "rows") c.data.csv_layout = CsvLayout::Rows;
            else bad_value(key, v, "flat or rows");
        };
        flag("data.csv_label", [](RunConfig& c) -> auto& { return c.data.csv_label; });
        flag("data.csv_header", [](RunConfig& c) -> auto& { return c.data.csv_header; });
        flag("data.normalize", [](RunConfig& c) -> auto& { return c.data.normalize; });
        real("data.test_fraction", [](RunConfig& c) -> auto& { return c.data.test_fraction; });
        size("data.split_seed", [](RunConfig& c) -> auto& { return c.data.split_seed; });
        return t;
    }();
    return table;
}

}  // namespace

nlohmann::json DataOptions::to_json() const {
    return {{"format", format},
            {"csv_channels", csv_channels},
            {"csv_layout", csv_layout == CsvLayout::Flat ? "flat" : "rows"},
            {"csv_label", csv_label},
            {"csv_header", csv_header},
            {"normalize", normalize},
            {"test_fraction", test_fraction},
            {"split_seed", split_seed}};
}

DataOptions DataOptions::from_json(const nlohmann::json& j) {
    DataOptions d;
    try {
        d.format = j.at("format");
        d.csv_channels = j.at("csv_channels");
        d.csv_layout = j.at("csv_layout") == "rows" ? CsvLayout::Rows : CsvLayout::Flat;
        d.csv_label = j.at("csv_label");
        d.csv_header = j.at("csv_header");
        d.normalize = j.at("normalize");
        d.test_fraction = j.at("test_fraction");
        d.split_seed = j.at("split_seed");
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed data options in manifest: ") + e.what());
    }
    return d;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, _] : setters()) keys.push_back(k);
    return keys;
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string section;
    std::size_t line_no = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        std::string line = trim(raw.substr(0, raw.find_first_of("#;")));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string name = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        const std::string key = section.empty() ? name : section + "." + name;
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
        it->second(cfg, key, value);
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

MtsDataset load_dataset(const std::filesystem::path& path, const DataOptions& options) {
    if (!std::filesystem::exists(path)) throw DataError("data file not found: " + path.string());
    std::string format = options.format;
    if (format == "auto") {
        const std::string ext = path.extension().string();
        if (ext == ".ts") format = "ts";
        else if (ext == ".csv") format = "csv";
        else throw ConfigError("cannot infer the data format of " + path.string() + "; set data.format");
    }
    if (format == "ts") return parse_ts(path);
    return parse_csv(path, CsvOptions{options.csv_channels, options.csv_layout, options.csv_label, options.csv_header});
}

}  // namespace cass::cli
