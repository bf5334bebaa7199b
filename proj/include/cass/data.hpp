#pragma once

// Datasets of equal-length multivariate series: loaders, normalisation,
// splits, batching and the synthetic two-class fixture.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cass/tensor.hpp"

namespace cass {

struct MtsDataset {
    std::string name;
    Tensor series;                         // [M, C, T]
    std::vector<int> labels;               // M entries, or empty when unlabeled
    std::vector<std::string> class_names;  // index -> label text

    std::size_t size() const { return series.shape()[0]; }
    std::size_t channels() const { return series.shape()[1]; }
    std::size_t length() const { return series.shape()[2]; }
    std::size_t class_count() const { return class_names.size(); }
    bool labeled() const { return !labels.empty(); }

    Tensor sample(std::size_t i) const;  // [C, T]
    // Rows in the given order (labels and class names carried along).
    MtsDataset select(const std::vector<std::size_t>& indices) const;
    void validate() const;  // throws DataError
};

// ---- .ts ------------------------------------------------------------------

// Header of '@key value' lines (case-insensitive keys: problemName, timeStamps,
// missing, univariate, dimensions, equalLength, seriesLength, classLabel),
// then '@data' and one record per line: channels separated by ':', values by
// ',', class label last when classLabel is true. '#' starts a comment line.
// Errors are ParseError carrying the 1-based line number.
MtsDataset parse_ts_text(const std::string& text, const std::string& name = "");
MtsDataset parse_ts(const std::filesystem::path& path);

// Shortest round-trip number formatting, so parse(write(ds)) == ds.
std::string write_ts(const MtsDataset& ds);

// ---- CSV ------------------------------------------------------------------

enum class CsvLayout {
    Flat,  // one sample per row: C*T values, channel-major
    Rows,  // C consecutive rows per sample, one channel per row
};

struct CsvOptions {
    std::size_t channels = 1;
    CsvLayout layout = CsvLayout::Flat;
    bool label_column = false;  // trailing column holds the class label
    bool header = false;        // skip the first line
};

MtsDataset parse_csv_text(const std::string& text, const CsvOptions& options, const std::string& name = "");
MtsDataset parse_csv(const std::filesystem::path& path, const CsvOptions& options);

// FNV-1a 64 of the file bytes as 16 hex digits.
std::string fingerprint_file(const std::filesystem::path& path);
std::string fingerprint_bytes(const std::string& bytes);

// ---- normalisation -------------------------------------------------------

struct NormStats {
    std::vector<double> mean;  // per channel
    std::vector<double> std;   // per channel; channels below kMinStd are only centred

    static constexpr double kMinStd = 1e-8;

    nlohmann::json to_json() const;
    static NormStats from_json(const nlohmann::json& j);
};

// Population mean/std per channel over all samples and steps.
NormStats fit_norm_stats(const MtsDataset& train);
MtsDataset apply_norm(const MtsDataset& ds, const NormStats& stats);
MtsDataset denormalize(const MtsDataset& ds, const NormStats& stats);

// Fits on `train` and returns it normalised.
std::pair<MtsDataset, NormStats> znormalize(const MtsDataset& train);

// ---- splits and batches --------------------------------------------------

// Per class keeps max(1, floor(n_c * fraction)) samples chosen by `seed`,
// preserving the original order. Throws DataError when unlabeled.
MtsDataset subsample(const MtsDataset& ds, double fraction, std::uint64_t seed);

// Stratified split; each class with >= 2 samples contributes
// round(n_c * test_fraction) (at least 1) to test.
std::pair<MtsDataset, MtsDataset> stratified_split(const MtsDataset& ds, double test_fraction, std::uint64_t seed);

struct MtsBatch {
    Tensor x;                          // [B, C, T]
    std::vector<int> labels;           // empty when unlabeled
    std::vector<std::size_t> indices;  // source rows
};

// Index order for one epoch: shuffled by (seed, epoch) or sequential.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, bool shuffle,
                                                    std::uint64_t seed, std::uint64_t epoch = 0);
MtsBatch gather_batch(const MtsDataset& ds, const std::vector<std::size_t>& indices);
std::vector<MtsBatch> batches(const MtsDataset& ds, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                              std::uint64_t epoch = 0);

// ---- synthetic fixture ---------------------------------------------------

// Two balanced classes. Every sample carries a smooth latent driver; the class
// sets the lag and sign with which the driver reappears in the other channels
// and adds a weak class-specific trend shape.
struct SyntheticConfig {
    std::size_t samples = 400;
    std::size_t channels = 4;
    std::size_t length = 32;
    double trend_amplitude = 0.05;
    double noise = 0.3;
    std::uint64_t seed = 7;
};

MtsDataset make_synthetic(const SyntheticConfig& cfg);

}  // namespace cass
