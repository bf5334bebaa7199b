#pragma once

// Command-line front end. Exit codes: 0 success, 2 usage or config,
// 3 data, 4 checkpoint or shape mismatch, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cass/data.hpp"
#include "cass/harness.hpp"

namespace cass::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kDataError = 3, kCheckpointError = 4 };

// How the data file is read and split.
struct DataOptions {
    std::string format = "auto";  // auto (by extension), ts or csv
    std::size_t csv_channels = 1;
    CsvLayout csv_layout = CsvLayout::Flat;
    bool csv_label = true;
    bool csv_header = false;
    bool normalize = true;
    double test_fraction = 0.5;  // used when no separate test file is given
    std::uint64_t split_seed = 0;

    nlohmann::json to_json() const;
    static DataOptions from_json(const nlohmann::json& j);
};

struct RunConfig {
    TrainConfig train;
    DataOptions data;
};

// 'key = value' lines; '[section]' headers prefix later keys with 'section.';
// '#' and ';' start comments. Keys mirror the TrainConfig field names
// (e.g. encoder.width, weights.tau, aug.segment_count_range = 4, 8,
// ablation.reverse_neg = true) plus data.* for DataOptions.
// Unknown keys and malformed values throw ConfigError naming the key.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Every key parse_config_text accepts.
std::vector<std::string> config_keys();

MtsDataset load_dataset(const std::filesystem::path& path, const DataOptions& options);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cass::cli
