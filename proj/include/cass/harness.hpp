#pragma once

// Training loops: self-supervised pretraining, frozen-encoder linear probe,
// supervised baseline, metrics and the few-shot sweep.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cass/augment.hpp"
#include "cass/checkpoint.hpp"
#include "cass/data.hpp"
#include "cass/encoder.hpp"
#include "cass/pretext.hpp"

namespace cass {

struct AblationFlags {
    bool no_ntp = false;
    bool no_cs = false;
    bool no_neg_augment = false;
    bool reverse_neg = false;
    bool use_nvp = false;
};

struct TrainConfig {
    EncoderConfig encoder;
    LossWeights weights;
    std::size_t k_ntp = 10;
    AugmentConfig aug;
    double pretrain_lr = 5e-5;
    double probe_lr = 1e-3;
    double supervised_lr = 1e-4;
    std::size_t pretrain_batch = 10;
    std::size_t probe_batch = 4;
    std::size_t pretrain_epochs = 40;
    std::size_t probe_epochs = 100;
    std::size_t patience = 10;  // epochs without train-loss improvement before stopping
    std::uint64_t seed = 0;
    AblationFlags ablation;

    // Loss weights after ablation flags (no_ntp zeroes alpha1, no_cs zeroes alpha2).
    LossWeights effective_weights() const;
    void validate() const;  // throws ConfigError

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;
    std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]

    nlohmann::json to_json() const;
};

// Throws ShapeError on length mismatch and IndexError on values outside [0, K).
Metrics compute_metrics(const std::vector<int>& pred, const std::vector<int>& truth, std::size_t classes);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    std::size_t step = 0;   // optimizer steps so far
    double ntp_loss = 0.0;  // per-epoch means of the per-step values
    double cs_loss = 0.0;
    double combined = 0.0;

    nlohmann::json to_json() const;
};

struct PretrainOptions {
    // When set: per-epoch checkpoints (last two kept), best.ckpt, final.ckpt and log.jsonl.
    std::optional<std::filesystem::path> out_dir;
    nlohmann::json extra_manifest;  // merged into every checkpoint manifest
    std::function<void(const EpochRecord&)> on_epoch;
};

struct PretrainResult {
    CatParams params;
    PretextHeads heads;
    std::vector<EpochRecord> log;
};

// ds must already be normalised; labels are ignored.
PretrainResult pretrain(const MtsDataset& ds, const TrainConfig& cfg, const PretrainOptions& options = {});

// Checkpoint helpers shared by the CLI and tests.
Checkpoint make_checkpoint(const CatParams& params, const PretextHeads& heads, const TrainConfig& cfg,
                           std::size_t epoch, std::size_t step, const nlohmann::json& extra = {});
// Rebuilds encoder parameters (and config) from a checkpoint; shapes are checked.
std::pair<TrainConfig, CatParams> load_encoder(const Checkpoint& ckpt);

// Flat representations [M, rows * D] with dropout off and no graph.
Tensor extract_features(const MtsDataset& ds, const CatParams& params, const EncoderConfig& config);

struct ProbeResult {
    Metrics metrics;
    std::vector<double> train_loss;  // per epoch
};

// Trains only an affine head on frozen features. Test classes unseen in
// training are warned about and can never be predicted.
ProbeResult linear_probe(const MtsDataset& train, const MtsDataset& test, const CatParams& params,
                         const TrainConfig& cfg);

// Encoder and head trained end to end from a fresh initialisation.
ProbeResult supervised_baseline(const MtsDataset& train, const MtsDataset& test, const TrainConfig& cfg);

struct SweepRow {
    double fraction = 0.0;
    std::string mode;  // "probe" or "supervised"
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double macro_f1_mean = 0.0, macro_f1_std = 0.0;
};

inline constexpr std::size_t kSweepRepeats = 5;

// For every fraction and seeds cfg.seed + {0..4}: probe on the pretrained
// encoder and supervised-from-scratch, each on subsample(train, fraction).
// Reports mean and population std.
std::vector<SweepRow> fewshot_sweep(const MtsDataset& train, const MtsDataset& test, const CatParams& pretrained,
                                    const TrainConfig& cfg, const std::vector<double>& fractions);

// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace cass
