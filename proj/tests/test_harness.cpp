#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "cass/errors.hpp"
#include "cass/harness.hpp"
#include "cass/log.hpp"

using namespace cass;

namespace {

TrainConfig toy_config(std::size_t c, std::size_t t) {
    TrainConfig cfg;
    cfg.encoder.channels = c;
    cfg.encoder.length = t;
    cfg.encoder.width = 8;
    cfg.encoder.layers = 1;
    cfg.encoder.heads = 2;
    cfg.encoder.dropout = 0.1;
    cfg.k_ntp = 3;
    cfg.pretrain_lr = 1e-3;
    cfg.pretrain_epochs = 2;
    cfg.probe_epochs = 20;
    return cfg;
}

// Balanced two-class data; `offset` shifts class 1 upwards (0 gives labels independent of the series).
MtsDataset noise_dataset(std::size_t m, std::size_t c, std::size_t t, double offset, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    MtsDataset ds;
    ds.name = "noise";
    ds.class_names = {"a", "b"};
    std::vector<double> v(m * c * t);
    for (std::size_t i = 0; i < m; ++i) {
        ds.labels.push_back(static_cast<int>(i % 2));
        for (std::size_t k = 0; k < c * t; ++k) v[i * c * t + k] = dist(rng) + offset * (i % 2);
    }
    ds.series = Tensor::from({m, c, t}, v);
    return ds;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

// ---- metrics ------------------------------------------------------------------

TEST(Metrics, PerfectPrediction) {
    const Metrics m = compute_metrics({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.macro_f1, 1.0);
}

TEST(Metrics, HalfRight) {
    const Metrics m = compute_metrics({0, 0, 1, 1}, {0, 1, 0, 1}, 2);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
    EXPECT_DOUBLE_EQ(m.macro_f1, 0.5);
    EXPECT_EQ(m.confusion, (std::vector<std::vector<std::size_t>>{{1, 1}, {1, 1}}));
}

TEST(Metrics, SingleClassPredictions) {
    const Metrics m = compute_metrics({0, 0, 0, 0}, {0, 0, 1, 1}, 2);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
    EXPECT_NEAR(m.macro_f1, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(m.per_class_f1[1], 0.0);
}

TEST(Metrics, ConfusionConsistency) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> d(0, 3);
    std::vector<int> pred(200), truth(200);
    for (std::size_t i = 0; i < 200; ++i) pred[i] = d(rng), truth[i] = d(rng);
    const Metrics m = compute_metrics(pred, truth, 4);
    std::size_t trace = 0, total = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        std::size_t row = 0;
        for (std::size_t j = 0; j < 4; ++j) row += m.confusion[k][j];
        EXPECT_EQ(row, static_cast<std::size_t>(std::count(truth.begin(), truth.end(), static_cast<int>(k))));
        trace += m.confusion[k][k];
        total += row;
    }
    EXPECT_DOUBLE_EQ(m.accuracy, static_cast<double>(trace) / total);
    EXPECT_GE(m.macro_f1, 0.0);
    EXPECT_LE(m.macro_f1, 1.0);
}

TEST(Metrics, Errors) {
    EXPECT_THROW(compute_metrics({0, 1}, {0}, 2), ShapeError);
    EXPECT_THROW(compute_metrics({0, 2}, {0, 1}, 2), IndexError);
}

TEST(MeanStd, Population) {
    const auto [m, s] = mean_std({1.0, 3.0});
    EXPECT_EQ(m, 2.0);
    EXPECT_EQ(s, 1.0);
}

// ---- config -------------------------------------------------------------------

TEST(TrainConfig, DefaultsAndJsonRoundTrip) {
    const TrainConfig d;
    EXPECT_EQ(d.k_ntp, 10u);
    EXPECT_EQ(d.pretrain_batch, 10u);
    EXPECT_EQ(d.probe_batch, 4u);
    EXPECT_EQ(d.pretrain_lr, 5e-5);
    EXPECT_EQ(d.probe_lr, 1e-3);
    EXPECT_EQ(d.supervised_lr, 1e-4);
    EXPECT_EQ(d.encoder.width, 512u);
    EXPECT_EQ(d.encoder.layers, 8u);
    EXPECT_EQ(d.encoder.heads, 8u);
    EXPECT_EQ(d.encoder.dropout, 0.2);

    TrainConfig cfg = toy_config(3, 9);
    cfg.ablation.reverse_neg = true;
    cfg.encoder.variant = EncoderVariant::SelfAggregate;
    cfg.aug.segment_count_range = {2, 3};
    EXPECT_EQ(TrainConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
}

TEST(TrainConfig, AblationWeights) {
    TrainConfig cfg;
    cfg.ablation.no_cs = true;
    EXPECT_EQ(cfg.effective_weights().alpha2, 0.0);
    EXPECT_EQ(cfg.effective_weights().alpha1, 2.0);
    cfg.ablation.no_ntp = true;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---- pretraining ----------------------------------------------------------------

TEST(Pretrain, LossDecreasesOverFiveEpochs) {
    SyntheticConfig sc;
    sc.samples = 200;
    const auto [ds, stats] = znormalize(make_synthetic(sc));
    TrainConfig cfg = toy_config(4, 32);
    cfg.encoder.width = 32;
    cfg.encoder.layers = 2;
    cfg.encoder.heads = 4;
    cfg.k_ntp = 10;
    cfg.pretrain_epochs = 5;
    const PretrainResult r = pretrain(ds, cfg);
    ASSERT_EQ(r.log.size(), 5u);
    EXPECT_LT(r.log.back().combined, r.log.front().combined);
    for (const EpochRecord& e : r.log) {
        EXPECT_DOUBLE_EQ(e.combined, combined_loss(e.ntp_loss, e.cs_loss, cfg.weights));
    }
}

TEST(Pretrain, NoCsLogsZeroContrastiveLoss) {
    const MtsDataset ds = noise_dataset(20, 2, 8, 0.0, 2);
    TrainConfig cfg = toy_config(2, 8);
    cfg.ablation.no_cs = true;
    for (const EpochRecord& e : pretrain(ds, cfg).log) {
        EXPECT_EQ(e.cs_loss, 0.0);
        EXPECT_GT(e.ntp_loss, 0.0);
    }
}

TEST(Pretrain, AblationVariantsRun) {
    const MtsDataset ds = noise_dataset(12, 2, 8, 0.0, 3);
    for (int which = 0; which < 4; ++which) {
        TrainConfig cfg = toy_config(2, 8);
        cfg.pretrain_epochs = 1;
        if (which == 0) cfg.ablation.no_ntp = true;
        if (which == 1) cfg.ablation.no_neg_augment = true;
        if (which == 2) cfg.ablation.reverse_neg = true;
        if (which == 3) cfg.ablation.use_nvp = true;
        const PretrainResult r = pretrain(ds, cfg);
        ASSERT_EQ(r.log.size(), 1u) << which;
        EXPECT_TRUE(std::isfinite(r.log[0].combined)) << which;
        if (which == 0) EXPECT_EQ(r.log[0].ntp_loss, 0.0);
    }
}

TEST(Pretrain, DeterministicLogsAndParameters) {
    const MtsDataset ds = noise_dataset(20, 2, 8, 0.0, 4);
    const TrainConfig cfg = toy_config(2, 8);
    const PretrainResult a = pretrain(ds, cfg), b = pretrain(ds, cfg);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].to_json(), b.log[i].to_json());
    EXPECT_EQ(serialize_checkpoint(make_checkpoint(a.params, a.heads, cfg, 2, 4)),
              serialize_checkpoint(make_checkpoint(b.params, b.heads, cfg, 2, 4)));
}

TEST(Pretrain, WritesCheckpointsAndLog) {
    const MtsDataset ds = noise_dataset(20, 2, 8, 0.0, 5);
    TrainConfig cfg = toy_config(2, 8);
    cfg.pretrain_epochs = 4;
    const auto dir = fresh_dir("cass_test_pretrain_out");
    std::size_t callbacks = 0;
    PretrainOptions opts;
    opts.out_dir = dir;
    opts.on_epoch = [&](const EpochRecord&) { ++callbacks; };
    const PretrainResult r = pretrain(ds, cfg, opts);
    EXPECT_EQ(callbacks, 4u);
    EXPECT_TRUE(std::filesystem::exists(dir / "final.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "epoch-0004.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "epoch-0003.ckpt"));
    EXPECT_FALSE(std::filesystem::exists(dir / "epoch-0002.ckpt"));
    const std::string log = read_file(dir / "log.jsonl");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);

    const auto [loaded_cfg, params] = load_encoder(load_checkpoint(dir / "final.ckpt"));
    EXPECT_EQ(loaded_cfg.to_json(), cfg.to_json());
    EXPECT_EQ(params.time_embedding.values(), r.params.time_embedding.values());
    std::filesystem::remove_all(dir);
}

TEST(Pretrain, NonFiniteLossAborts) {
    MtsDataset ds = noise_dataset(10, 2, 8, 0.0, 6);
    ds.series.mutable_data()[3] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(pretrain(ds, toy_config(2, 8)), NumericError);
}

// ---- probe ------------------------------------------------------------------------

TEST(Probe, EncoderStaysFrozen) {
    const MtsDataset ds = noise_dataset(16, 2, 8, 1.0, 7);
    const TrainConfig cfg = toy_config(2, 8);
    const CatParams params = CatParams::init(cfg.encoder, 7);
    const ParamList named = params.named_parameters(cfg.encoder);
    std::vector<std::vector<double>> before;
    for (const auto& np : named) before.push_back(np.tensor.values());
    linear_probe(ds, ds, params, cfg);
    for (std::size_t i = 0; i < named.size(); ++i) {
        EXPECT_EQ(named[i].tensor.values(), before[i]) << named[i].name;
        EXPECT_FALSE(named[i].tensor.has_grad()) << named[i].name;
    }
}

TEST(Probe, RandomEncoderOnUninformativeLabelsIsChance) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MtsDataset train = noise_dataset(100, 2, 8, 0.0, 100 + seed);
        const MtsDataset test = noise_dataset(200, 2, 8, 0.0, 200 + seed);
        TrainConfig cfg = toy_config(2, 8);
        cfg.seed = seed;
        const double acc = linear_probe(train, test, CatParams::init(cfg.encoder, seed), cfg).metrics.accuracy;
        EXPECT_GE(acc, 0.35) << "seed " << seed;
        EXPECT_LE(acc, 0.65) << "seed " << seed;
    }
}

TEST(Probe, SeparableRepresentationsOnTrainSplit) {
    const MtsDataset ds = noise_dataset(60, 2, 8, 4.0, 8);
    TrainConfig cfg = toy_config(2, 8);
    cfg.probe_epochs = 100;
    const ProbeResult r = linear_probe(ds, ds, CatParams::init(cfg.encoder, 8), cfg);
    EXPECT_GE(r.metrics.accuracy, 0.95);
    EXPECT_FALSE(r.train_loss.empty());
}

TEST(Probe, UnseenTestClassWarnsAndIsNeverPredicted) {
    MtsDataset train = noise_dataset(10, 2, 8, 2.0, 9);
    train.class_names.push_back("c");
    MtsDataset test = noise_dataset(6, 2, 8, 2.0, 10);
    test.class_names.push_back("c");
    test.labels[0] = 2;
    log::set_quiet(true);
    const std::size_t before = log::warning_count();
    const Metrics m = linear_probe(train, test, CatParams::init(toy_config(2, 8).encoder, 9), toy_config(2, 8)).metrics;
    EXPECT_GT(log::warning_count(), before);
    log::set_quiet(false);
    EXPECT_EQ(m.confusion[2][2], 0u);
    for (const auto& row : m.confusion) EXPECT_EQ(row[2], 0u);
}

TEST(Supervised, LearnsSeparableData) {
    const MtsDataset ds = noise_dataset(40, 2, 8, 3.0, 11);
    TrainConfig cfg = toy_config(2, 8);
    cfg.probe_epochs = 10;
    cfg.supervised_lr = 1e-3;
    EXPECT_GE(supervised_baseline(ds, ds, cfg).metrics.accuracy, 0.9);
}

TEST(FewShot, RowsPerFractionAndMode) {
    const MtsDataset train = noise_dataset(40, 2, 8, 2.0, 12);
    const MtsDataset test = noise_dataset(20, 2, 8, 2.0, 13);
    TrainConfig cfg = toy_config(2, 8);
    cfg.probe_epochs = 2;
    const auto rows = fewshot_sweep(train, test, CatParams::init(cfg.encoder, 12), cfg, {0.01, 0.5});
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].mode, "probe");
    EXPECT_EQ(rows[1].mode, "supervised");
    for (const SweepRow& r : rows) {
        EXPECT_GE(r.accuracy_std, 0.0);
        EXPECT_GE(r.macro_f1_std, 0.0);
        EXPECT_GE(r.accuracy_mean, 0.0);
        EXPECT_LE(r.accuracy_mean, 1.0);
    }
}
