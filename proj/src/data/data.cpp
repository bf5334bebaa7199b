#include "cass/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "cass/errors.hpp"

namespace cass {
namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open data file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::vector<std::string_view> lines_of(const std::string& text) {
    auto lines = split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

double parse_number(std::string_view cell, std::size_t line) {
    cell = trim(cell);
    double v = 0.0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (cell.empty() || ec != std::errc() || ptr != end) {
        throw ParseError("not a number: '" + std::string(cell) + "'", line);
    }
    return v;
}

bool parse_bool(std::string_view value, const std::string& key, std::size_t line) {
    const std::string v = lower(trim(value));
    if (v == "true") return true;
    if (v == "false") return false;
    throw ParseError("@" + key + " expects true or false, got '" + std::string(value) + "'", line);
}

std::size_t parse_count(std::string_view value, const std::string& key, std::size_t line) {
    value = trim(value);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size() || v == 0) {
        throw ParseError("@" + key + " expects a positive integer, got '" + std::string(value) + "'", line);
    }
    return v;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

int class_index(const std::vector<std::string>& names, std::string_view label) {
    const auto it = std::find(names.begin(), names.end(), label);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

}  // namespace

Tensor MtsDataset::sample(std::size_t i) const {
    if (i >= size()) throw IndexError("sample index " + std::to_string(i) + " out of range");
    const std::size_t n = channels() * length();
    const auto src = series.data().subspan(i * n, n);
    return Tensor::from({channels(), length()}, std::vector<double>(src.begin(), src.end()));
}

MtsDataset MtsDataset::select(const std::vector<std::size_t>& indices) const {
    if (indices.empty()) throw DataError("selection of zero samples from " + name);
    const std::size_t n = channels() * length();
    std::vector<double> values;
    values.reserve(indices.size() * n);
    MtsDataset out{name, {}, {}, class_names};
    const auto src = series.data();
    for (std::size_t i : indices) {
        if (i >= size()) throw IndexError("sample index " + std::to_string(i) + " out of range");
        values.insert(values.end(), src.begin() + static_cast<std::ptrdiff_t>(i * n),
                      src.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        if (labeled()) out.labels.push_back(labels[i]);
    }
    out.series = Tensor::from({indices.size(), channels(), length()}, std::move(values));
    return out;
}

void MtsDataset::validate() const {
    if (series.dim() != 3) throw DataError("series must be [M, C, T], got " + shape_to_string(series.shape()));
    if (labeled()) {
        if (labels.size() != size()) throw DataError("label count does not match sample count");
        for (int l : labels) {
            if (l < 0 || static_cast<std::size_t>(l) >= class_count()) throw DataError("label out of range");
        }
    }
}

// ---- .ts --------------------------------------------------------------------

MtsDataset parse_ts_text(const std::string& text, const std::string& name) {
    MtsDataset ds;
    ds.name = name;
    bool univariate = false;
    bool class_label = false;
    bool in_data = false;
    std::size_t dimensions = 0;
    std::size_t series_length = 0;
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> values;

    const auto lines = lines_of(text);
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        const std::string_view line = trim(lines[li]);
        if (line.empty() || line.front() == '#') continue;

        if (!in_data) {
            if (line.front() != '@') throw ParseError("expected a '@' header line before @data", line_no);
            const auto space = line.find_first_of(" \t");
            const std::string key = lower(line.substr(1, space == std::string_view::npos ? std::string_view::npos : space - 1));
            const std::string_view value = space == std::string_view::npos ? std::string_view{} : trim(line.substr(space + 1));
            if (key == "data") {
                in_data = true;
                if (univariate) {
                    if (dimensions > 1) throw ParseError("@univariate true conflicts with @dimensions " + std::to_string(dimensions), line_no);
                    dimensions = 1;
                }
            } else if (key == "problemname") {
                if (ds.name.empty()) ds.name = std::string(value);
            } else if (key == "timestamps") {
                if (parse_bool(value, "timeStamps", line_no)) throw ParseError("time-stamped series are not supported", line_no);
            } else if (key == "missing") {
                parse_bool(value, "missing", line_no);
            } else if (key == "univariate") {
                univariate = parse_bool(value, "univariate", line_no);
            } else if (key == "dimensions") {
                dimensions = parse_count(value, "dimensions", line_no);
            } else if (key == "equallength") {
                if (!parse_bool(value, "equalLength", line_no)) throw ParseError("only equal-length series are supported", line_no);
            } else if (key == "serieslength") {
                series_length = parse_count(value, "seriesLength", line_no);
            } else if (key == "classlabel") {
                std::istringstream ss{std::string(value)};
                std::string flag;
                ss >> flag;
                class_label = parse_bool(flag, "classLabel", line_no);
                for (std::string label; ss >> label;) ds.class_names.push_back(label);
                if (class_label && ds.class_names.empty()) throw ParseError("@classLabel true needs a label list", line_no);
            } else {
                throw ParseError("unknown header key '@" + key + "'", line_no);
            }
            continue;
        }

        auto fields = split(line, ':');
        if (class_label) {
            if (fields.size() < 2) throw ParseError("record lacks a class label", line_no);
            const std::string_view label = trim(fields.back());
            const int idx = class_index(ds.class_names, label);
            if (idx < 0) throw ParseError("unknown class label '" + std::string(label) + "'", line_no);
            ds.labels.push_back(idx);
            fields.pop_back();
        }
        if (channels == 0) {
            channels = fields.size();
            if (dimensions != 0 && channels != dimensions) {
                throw ParseError("record has " + std::to_string(channels) + " channels, header declares " +
                                 std::to_string(dimensions), line_no);
            }
        } else if (fields.size() != channels) {
            throw ParseError("record has " + std::to_string(fields.size()) + " channels, expected " + std::to_string(channels), line_no);
        }
        for (std::string_view field : fields) {
            const auto cells = split(field, ',');
            if (length == 0) {
                length = cells.size();
                if (series_length != 0 && length != series_length) {
                    throw ParseError("channel has " + std::to_string(length) + " values, @seriesLength is " +
                                     std::to_string(series_length), line_no);
                }
            } else if (cells.size() != length) {
                throw ParseError("channel has " + std::to_string(cells.size()) + " values, expected " + std::to_string(length), line_no);
            }
            for (std::string_view cell : cells) {
                if (trim(cell) == "?") throw ParseError("missing values are not supported", line_no);
                values.push_back(parse_number(cell, line_no));
            }
        }
    }
    if (!in_data) throw ParseError("no @data section", lines.size() + 1);
    if (values.empty()) throw ParseError("no records after @data", lines.size() + 1);
    if (!class_label) ds.class_names.clear();
    const std::size_t count = values.size() / (channels * length);
    ds.series = Tensor::from({count, channels, length}, std::move(values));
    return ds;
}

MtsDataset parse_ts(const std::filesystem::path& path) {
    return parse_ts_text(read_file(path), path.stem().string());
}

std::string write_ts(const MtsDataset& ds) {
    std::ostringstream out;
    out << "@problemName " << (ds.name.empty() ? "unnamed" : ds.name) << "\n";
    out << "@timeStamps false\n@missing false\n";
    out << "@univariate " << (ds.channels() == 1 ? "true" : "false") << "\n";
    out << "@dimensions " << ds.channels() << "\n";
    out << "@equalLength true\n@seriesLength " << ds.length() << "\n";
    out << "@classLabel " << (ds.labeled() ? "true" : "false");
    if (ds.labeled()) {
        for (const std::string& c : ds.class_names) out << ' ' << c;
    }
    out << "\n@data\n";
    const auto v = ds.series.data();
    const std::size_t c = ds.channels();
    const std::size_t t = ds.length();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            if (j) out << ':';
            for (std::size_t k = 0; k < t; ++k) {
                if (k) out << ',';
                out << format_number(v[(i * c + j) * t + k]);
            }
        }
        if (ds.labeled()) out << ':' << ds.class_names[static_cast<std::size_t>(ds.labels[i])];
        out << '\n';
    }
    return out.str();
}

// ---- CSV --------------------------------------------------------------------

MtsDataset parse_csv_text(const std::string& text, const CsvOptions& options, const std::string& name) {
    if (options.channels < 1) throw ConfigError("csv channel count must be >= 1");
    std::vector<std::vector<double>> rows;
    std::vector<std::string> row_labels;
    std::vector<std::size_t> row_lines;
    const auto lines = lines_of(text);
    for (std::size_t li = options.header ? 1 : 0; li < lines.size(); ++li) {
        const std::string_view line = trim(lines[li]);
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (options.label_column) {
            if (cells.size() < 2) throw ParseError("row lacks a label column", li + 1);
            row_labels.emplace_back(trim(cells.back()));
            cells.pop_back();
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::string_view cell : cells) row.push_back(parse_number(cell, li + 1));
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError("row has " + std::to_string(row.size()) + " values, expected " + std::to_string(rows.front().size()), li + 1);
        }
        rows.push_back(std::move(row));
        row_lines.push_back(li + 1);
    }
    if (rows.empty()) throw ParseError("no data rows", lines.size() + 1);

    const std::size_t c = options.channels;
    std::size_t length = 0;
    std::size_t count = 0;
    if (options.layout == CsvLayout::Flat) {
        if (rows.front().size() % c != 0) {
            throw ParseError(std::to_string(rows.front().size()) + " values per row do not split into " + std::to_string(c) + " channels", row_lines.front());
        }
        length = rows.front().size() / c;
        count = rows.size();
    } else {
        if (rows.size() % c != 0) {
            throw ParseError(std::to_string(rows.size()) + " rows do not group into samples of " + std::to_string(c) + " channels", row_lines.back());
        }
        length = rows.front().size();
        count = rows.size() / c;
    }

    MtsDataset ds;
    ds.name = name;
    std::vector<double> values;
    values.reserve(count * c * length);
    for (const auto& row : rows) values.insert(values.end(), row.begin(), row.end());
    ds.series = Tensor::from({count, c, length}, std::move(values));

    if (options.label_column) {
        std::vector<std::string> per_sample;
        for (std::size_t i = 0; i < count; ++i) {
            if (options.layout == CsvLayout::Rows) {
                for (std::size_t j = 1; j < c; ++j) {
                    if (row_labels[i * c + j] != row_labels[i * c]) throw ParseError("channel rows of one sample disagree on the label", row_lines[i * c + j]);
                }
                per_sample.push_back(row_labels[i * c]);
            } else {
                per_sample.push_back(row_labels[i]);
            }
        }
        ds.class_names = per_sample;
        std::sort(ds.class_names.begin(), ds.class_names.end());
        ds.class_names.erase(std::unique(ds.class_names.begin(), ds.class_names.end()), ds.class_names.end());
        for (const std::string& l : per_sample) ds.labels.push_back(class_index(ds.class_names, l));
    }
    return ds;
}

MtsDataset parse_csv(const std::filesystem::path& path, const CsvOptions& options) {
    return parse_csv_text(read_file(path), options, path.stem().string());
}

std::string fingerprint_bytes(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fingerprint_file(const std::filesystem::path& path) { return fingerprint_bytes(read_file(path)); }

// ---- normalisation ------------------------------------------------------------

nlohmann::json NormStats::to_json() const { return {{"mean", mean}, {"std", std}}; }

NormStats NormStats::from_json(const nlohmann::json& j) {
    NormStats s;
    try {
        s.mean = j.at("mean").get<std::vector<double>>();
        s.std = j.at("std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed normalisation stats: ") + e.what());
    }
    if (s.mean.size() != s.std.size()) throw DataError("normalisation stats: mean and std lengths differ");
    return s;
}

NormStats fit_norm_stats(const MtsDataset& train) {
    const std::size_t c = train.channels();
    const std::size_t t = train.length();
    const auto v = train.series.data();
    NormStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    const double n = static_cast<double>(train.size() * t);
    for (std::size_t j = 0; j < c; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            for (std::size_t k = 0; k < t; ++k) total += v[(i * c + j) * t + k];
        }
        const double mean = total / n;
        double sq = 0.0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            for (std::size_t k = 0; k < t; ++k) {
                const double d = v[(i * c + j) * t + k] - mean;
                sq += d * d;
            }
        }
        s.mean[j] = mean;
        s.std[j] = std::sqrt(sq / n);
    }
    return s;
}

namespace {

MtsDataset map_channels(const MtsDataset& ds, const NormStats& stats, bool forward) {
    const std::size_t c = ds.channels();
    const std::size_t t = ds.length();
    if (stats.mean.size() != c) {
        throw ShapeError("normalisation stats cover " + std::to_string(stats.mean.size()) + " channels, dataset has " + std::to_string(c));
    }
    MtsDataset out = ds;
    std::vector<double> v = ds.series.values();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double sd = stats.std[j] < NormStats::kMinStd ? 1.0 : stats.std[j];
            for (std::size_t k = 0; k < t; ++k) {
                double& x = v[(i * c + j) * t + k];
                x = forward ? (x - stats.mean[j]) / sd : x * sd + stats.mean[j];
            }
        }
    }
    out.series = Tensor::from(ds.series.shape(), std::move(v));
    return out;
}

}  // namespace

MtsDataset apply_norm(const MtsDataset& ds, const NormStats& stats) { return map_channels(ds, stats, true); }
MtsDataset denormalize(const MtsDataset& ds, const NormStats& stats) { return map_channels(ds, stats, false); }

std::pair<MtsDataset, NormStats> znormalize(const MtsDataset& train) {
    NormStats stats = fit_norm_stats(train);
    return {apply_norm(train, stats), std::move(stats)};
}

// ---- splits and batches --------------------------------------------------------

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
}

std::vector<std::vector<std::size_t>> indices_by_class(const MtsDataset& ds) {
    if (!ds.labeled()) throw DataError("dataset '" + ds.name + "' has no labels");
    std::vector<std::vector<std::size_t>> by_class(ds.class_count());
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    return by_class;
}

}  // namespace

MtsDataset subsample(const MtsDataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must be in (0, 1], got " + std::to_string(fraction));
    auto by_class = indices_by_class(ds);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> keep;
    for (auto& members : by_class) {
        if (members.empty()) continue;
        const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(members.size()) * fraction + 1e-9));
        shuffle_indices(members, rng);
        keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, n)));
    }
    std::sort(keep.begin(), keep.end());
    return ds.select(keep);
}

std::pair<MtsDataset, MtsDataset> stratified_split(const MtsDataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
    auto by_class = indices_by_class(ds);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> train, test;
    for (auto& members : by_class) {
        shuffle_indices(members, rng);
        std::size_t n_test = 0;
        if (members.size() >= 2) {
            n_test = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * test_fraction));
            n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
        }
        test.insert(test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
        train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {ds.select(train), ds.select(test)};
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, bool shuffle,
                                                    std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
        std::mt19937_64 rng(seq);
        shuffle_indices(order, rng);
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < count; i += batch_size) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
    }
    return out;
}

MtsBatch gather_batch(const MtsDataset& ds, const std::vector<std::size_t>& indices) {
    MtsDataset sub = ds.select(indices);
    return {std::move(sub.series), std::move(sub.labels), indices};
}

std::vector<MtsBatch> batches(const MtsDataset& ds, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                              std::uint64_t epoch) {
    std::vector<MtsBatch> out;
    for (const auto& idx : batch_indices(ds.size(), batch_size, shuffle, seed, epoch)) out.push_back(gather_batch(ds, idx));
    return out;
}

}  // namespace cass
