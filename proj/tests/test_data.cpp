#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "cass/data.hpp"
#include "cass/errors.hpp"

using namespace cass;

namespace {

const char* kTwoRecords =
    "# comment\n"
    "@problemName Toy\n"
    "@timeStamps false\n"
    "@univariate false\n"
    "@dimensions 2\n"
    "@equalLength true\n"
    "@seriesLength 3\n"
    "@classLabel true a b\n"
    "@data\n"
    "1,2,3:4,5,6:a\n"
    "-1.5,0,2e-3:7,8,9:b\n";

std::size_t parse_error_line(const std::string& text) {
    try {
        parse_ts_text(text);
    } catch (const ParseError& e) {
        return e.line();
    }
    return 0;
}

MtsDataset random_dataset(std::mt19937_64& rng, std::size_t m, std::size_t c, std::size_t t, std::size_t k) {
    std::normal_distribution<double> dist(0.0, 10.0);
    std::vector<double> v(m * c * t);
    for (double& x : v) x = dist(rng);
    MtsDataset ds;
    ds.name = "random";
    ds.series = Tensor::from({m, c, t}, v);
    for (std::size_t i = 0; i < k; ++i) ds.class_names.push_back("class" + std::to_string(i));
    for (std::size_t i = 0; i < m; ++i) ds.labels.push_back(static_cast<int>(i % k));
    return ds;
}

MtsDataset balanced(std::size_t per_class, std::size_t classes) {
    std::mt19937_64 rng(0);
    return random_dataset(rng, per_class * classes, 1, 4, classes);
}

std::map<int, std::size_t> class_counts(const MtsDataset& ds) {
    std::map<int, std::size_t> counts;
    for (int l : ds.labels) ++counts[l];
    return counts;
}

}  // namespace

// ---- .ts ------------------------------------------------------------------

TEST(Ts, ParsesHandWrittenFixture) {
    const MtsDataset ds = parse_ts_text(kTwoRecords);
    EXPECT_EQ(ds.name, "Toy");
    EXPECT_EQ(ds.series.shape(), (Shape{2, 2, 3}));
    EXPECT_EQ(ds.series.values(), (std::vector<double>{1, 2, 3, 4, 5, 6, -1.5, 0, 2e-3, 7, 8, 9}));
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1}));
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a", "b"}));
}

TEST(Ts, HeaderKeysAreCaseInsensitive) {
    std::string text = kTwoRecords;
    text.replace(text.find("@seriesLength"), 13, "@SERIESLENGTH");
    EXPECT_EQ(parse_ts_text(text).length(), 3u);
}

TEST(Ts, ErrorsCarryLineNumbers) {
    auto with = [](const std::string& from, const std::string& to) {
        std::string text = kTwoRecords;
        text.replace(text.find(from), from.size(), to);
        return text;
    };
    // Declared length 5, record holds 3 values.
    EXPECT_EQ(parse_error_line(with("@seriesLength 3", "@seriesLength 5")), 10u);
    EXPECT_EQ(parse_error_line(with("4,5,6:a", "4,5:a")), 10u);
    EXPECT_EQ(parse_error_line(with("7,8,9:b", "7,8,9:zzz")), 11u);
    EXPECT_EQ(parse_error_line(with("7,8,9:b", "7,x,9:b")), 11u);
    EXPECT_EQ(parse_error_line(with("7,8,9:b", "7,?,9:b")), 11u);
    EXPECT_EQ(parse_error_line(with("-1.5,0,2e-3:", "")), 11u);
    EXPECT_EQ(parse_error_line(with("@timeStamps false", "@timeStamps true")), 3u);
    EXPECT_EQ(parse_error_line(with("@equalLength true", "@equalLength false")), 6u);
    EXPECT_EQ(parse_error_line(with("@problemName Toy", "@bogus 1")), 2u);
    EXPECT_GT(parse_error_line("@problemName x\n@classLabel false\n"), 0u);
}

TEST(Ts, MissingFileIsDataError) { EXPECT_THROW(parse_ts("/nonexistent/file.ts"), DataError); }

TEST(Ts, RoundTripOnRandomDatasets) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const MtsDataset ds = random_dataset(rng, 1 + trial % 7, 1 + trial % 4, 2 + trial % 9, 1 + trial % 3);
        const MtsDataset back = parse_ts_text(write_ts(ds));
        EXPECT_EQ(back.series.shape(), ds.series.shape());
        EXPECT_EQ(back.series.values(), ds.series.values());
        EXPECT_EQ(back.labels, ds.labels);
        EXPECT_EQ(back.class_names, ds.class_names);
        EXPECT_EQ(write_ts(back), write_ts(ds));
    }
}

TEST(Ts, RecordCountPreserved) {
    std::mt19937_64 rng(2);
    const MtsDataset ds = random_dataset(rng, 37, 2, 5, 3);
    EXPECT_EQ(parse_ts_text(write_ts(ds)).size(), 37u);
}

// ---- CSV ------------------------------------------------------------------

TEST(Csv, FlatLayoutWithLabels) {
    const MtsDataset ds = parse_csv_text("1,2,3,4,x\n5,6,7,8,y\n9,10,11,12,x\n", {2, CsvLayout::Flat, true, false});
    EXPECT_EQ(ds.series.shape(), (Shape{3, 2, 2}));
    EXPECT_EQ(ds.series.at({1, 1, 0}), 7.0);
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 0}));
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"x", "y"}));
}

TEST(Csv, RowLayoutWithHeader) {
    const MtsDataset ds = parse_csv_text("t0,t1,t2\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n", {2, CsvLayout::Rows, false, true});
    EXPECT_EQ(ds.series.shape(), (Shape{2, 2, 3}));
    EXPECT_EQ(ds.series.at({1, 0, 2}), 9.0);
    EXPECT_FALSE(ds.labeled());
}

TEST(Csv, Errors) {
    EXPECT_THROW(parse_csv_text("1,2,3\n", {2, CsvLayout::Flat, false, false}), ParseError);
    EXPECT_THROW(parse_csv_text("1,2\n3,4\n5,6\n", {2, CsvLayout::Rows, false, false}), ParseError);
    EXPECT_THROW(parse_csv_text("1,a\n", {1, CsvLayout::Flat, false, false}), ParseError);
    EXPECT_THROW(parse_csv_text("1,2\n3\n", {1, CsvLayout::Flat, false, false}), ParseError);
}

TEST(Fingerprint, Fnv1aReferenceValues) {
    EXPECT_EQ(fingerprint_bytes(""), "cbf29ce484222325");
    EXPECT_EQ(fingerprint_bytes("a"), "af63dc4c8601ec8c");
}

// ---- normalisation --------------------------------------------------------

TEST(Norm, ConstantChannelBecomesZero) {
    MtsDataset ds = balanced(2, 2);
    ds.series = Tensor::full({4, 1, 4}, 3.25);
    const auto [norm, stats] = znormalize(ds);
    for (double v : norm.series.data()) EXPECT_EQ(v, 0.0);
}

TEST(Norm, TrainMomentsAfterNormalisation) {
    std::mt19937_64 rng(3);
    const MtsDataset ds = random_dataset(rng, 20, 3, 16, 2);
    const auto [norm, stats] = znormalize(ds);
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0, v = 0;
        const std::size_t n = 20 * 16;
        for (std::size_t i = 0; i < 20; ++i)
            for (std::size_t t = 0; t < 16; ++t) m += norm.series.at({i, c, t});
        m /= n;
        for (std::size_t i = 0; i < 20; ++i)
            for (std::size_t t = 0; t < 16; ++t) v += std::pow(norm.series.at({i, c, t}) - m, 2);
        EXPECT_LT(std::abs(m), 1e-9);
        EXPECT_NEAR(std::sqrt(v / n), 1.0, 1e-6);
    }
}

TEST(Norm, TestSplitUsesTrainStats) {
    std::mt19937_64 rng(4);
    const MtsDataset train = random_dataset(rng, 10, 2, 8, 2);
    const MtsDataset test = random_dataset(rng, 10, 2, 8, 2);
    const NormStats stats = fit_norm_stats(train);
    const MtsDataset nt = apply_norm(test, stats);
    EXPECT_NEAR(nt.series.at({3, 1, 4}), (test.series.at({3, 1, 4}) - stats.mean[1]) / stats.std[1], 1e-12);
}

TEST(Norm, DenormaliseRecoversInput) {
    std::mt19937_64 rng(5);
    const MtsDataset ds = random_dataset(rng, 10, 3, 8, 2);
    const auto [norm, stats] = znormalize(ds);
    const MtsDataset back = denormalize(norm, NormStats::from_json(stats.to_json()));
    for (std::size_t i = 0; i < ds.series.numel(); ++i) EXPECT_NEAR(back.series.data()[i], ds.series.data()[i], 1e-9);
}

// ---- subsample ------------------------------------------------------------

TEST(Subsample, Examples) {
    const MtsDataset ds = balanced(50, 2);
    EXPECT_EQ(subsample(ds, 1.0, 1).series.values(), ds.series.values());
    const auto counts = class_counts(subsample(ds, 0.1, 1));
    EXPECT_EQ(counts.at(0), 5u);
    EXPECT_EQ(counts.at(1), 5u);
    const auto tiny = class_counts(subsample(balanced(10, 3), 0.01, 1));
    for (int k = 0; k < 3; ++k) EXPECT_EQ(tiny.at(k), 1u);
}

TEST(Subsample, StratificationRuleOverRandomInputs) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> m_dist(5, 200), k_dist(1, 6);
    std::uniform_real_distribution<double> f_dist(0.005, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = k_dist(rng);
        MtsDataset ds = random_dataset(rng, std::max(k, m_dist(rng)), 1, 2, k);
        std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
        const double f = f_dist(rng);
        const auto before = class_counts(ds);
        const MtsDataset sub = subsample(ds, f, trial);
        const auto after = class_counts(sub);
        for (const auto& [label, n] : before) {
            const auto expected = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * f + 1e-9)));
            EXPECT_EQ(after.at(label), expected);
        }
        EXPECT_EQ(subsample(ds, f, trial).series.values(), sub.series.values());
    }
}

TEST(Subsample, Errors) {
    MtsDataset ds = balanced(5, 2);
    EXPECT_THROW(subsample(ds, 0.0, 1), ConfigError);
    EXPECT_THROW(subsample(ds, 1.5, 1), ConfigError);
    ds.labels.clear();
    EXPECT_THROW(subsample(ds, 0.5, 1), DataError);
}

TEST(Split, StratifiedAndDisjoint) {
    const MtsDataset ds = balanced(20, 3);
    const auto [train, test] = stratified_split(ds, 0.25, 9);
    EXPECT_EQ(train.size() + test.size(), 60u);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(class_counts(test).at(k), 5u);
    std::set<double> seen;
    for (double v : train.series.data()) seen.insert(v);
    for (double v : test.series.data()) EXPECT_FALSE(seen.count(v));
}

// ---- batches ----------------------------------------------------------------

TEST(Batches, SizesAndFinalShortBatch) {
    const auto idx = batch_indices(7, 4, true, 3);
    ASSERT_EQ(idx.size(), 2u);
    EXPECT_EQ(idx[0].size(), 4u);
    EXPECT_EQ(idx[1].size(), 3u);
}

TEST(Batches, DeterministicPartitionPerEpoch) {
    const auto a = batch_indices(23, 5, true, 11, 2), b = batch_indices(23, 5, true, 11, 2);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, batch_indices(23, 5, true, 11, 3));
    std::vector<std::size_t> all;
    for (const auto& batch : a) all.insert(all.end(), batch.begin(), batch.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 23; ++i) EXPECT_EQ(all[i], i);
    EXPECT_EQ(batch_indices(5, 2, false, 0)[2], (std::vector<std::size_t>{4}));
}

TEST(Batches, GatherCarriesLabelsAndIndices) {
    const MtsDataset ds = balanced(3, 2);
    const auto bs = batches(ds, 4, false, 0);
    ASSERT_EQ(bs.size(), 2u);
    EXPECT_EQ(bs[1].indices, (std::vector<std::size_t>{4, 5}));
    EXPECT_EQ(bs[1].labels, (std::vector<int>{ds.labels[4], ds.labels[5]}));
    EXPECT_EQ(bs[1].x.shape(), (Shape{2, 1, 4}));
}

// ---- synthetic fixture ------------------------------------------------------

TEST(Synthetic, ShapeBalanceAndDeterminism) {
    const MtsDataset ds = make_synthetic({});
    EXPECT_EQ(ds.series.shape(), (Shape{400, 4, 32}));
    EXPECT_EQ(class_counts(ds).at(0), 200u);
    EXPECT_EQ(class_counts(ds).at(1), 200u);
    EXPECT_EQ(make_synthetic({}).series.values(), ds.series.values());
    SyntheticConfig other;
    other.seed = 8;
    EXPECT_NE(make_synthetic(other).series.values(), ds.series.values());
}
