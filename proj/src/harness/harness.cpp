#include "cass/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "cass/adam.hpp"
#include "cass/errors.hpp"
#include "cass/log.hpp"

namespace cass {
namespace {

// Independent seeds per purpose so that adding draws in one stream never
// shifts another.
enum class Stream : std::uint64_t {
    EncoderInit = 1,
    HeadInit,
    Augment,
    Dropout,
    Truncation,
    PretrainOrder,
    ProbeInit,
    ProbeOrder,
    SupervisedInit,
    SupervisedDropout,
};

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t extra = 0) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(stream) + 1) + 0xD1B54A32D192ED03ULL * extra;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void check_dims(const MtsDataset& ds, const EncoderConfig& enc) {
    if (ds.channels() != enc.channels || ds.length() != enc.length) {
        throw ShapeError("dataset samples are [" + std::to_string(ds.channels()) + "x" + std::to_string(ds.length()) +
                         "] but the encoder expects [" + std::to_string(enc.channels) + "x" + std::to_string(enc.length) + "]");
    }
}

void append(ParamList& dst, const ParamList& src) { dst.insert(dst.end(), src.begin(), src.end()); }

std::vector<int> argmax_rows(const Tensor& logits, const std::vector<bool>& allowed) {
    const std::size_t n = logits.shape()[0];
    const std::size_t k = logits.shape()[1];
    const auto v = logits.data();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        int best = -1;
        for (std::size_t c = 0; c < k; ++c) {
            if (!allowed[c]) continue;
            if (best < 0 || v[i * k + c] > v[i * k + static_cast<std::size_t>(best)]) best = static_cast<int>(c);
        }
        out[i] = best;
    }
    return out;
}

// Classes seen in training; warns about test classes outside that set.
std::vector<bool> trainable_classes(const MtsDataset& train, const MtsDataset& test) {
    if (!train.labeled() || !test.labeled()) throw DataError("probe and supervised runs need labeled train and test splits");
    if (train.class_names != test.class_names) throw DataError("train and test splits declare different class lists");
    std::vector<bool> present(train.class_count(), false);
    for (int l : train.labels) present[static_cast<std::size_t>(l)] = true;
    std::vector<bool> warned(train.class_count(), false);
    for (int l : test.labels) {
        const auto c = static_cast<std::size_t>(l);
        if (!present[c] && !warned[c]) {
            log::warn("class '" + test.class_names[c] + "' appears in test but not in train; its samples are scored as wrong");
            warned[c] = true;
        }
    }
    return present;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(labels[i]);
    return out;
}

// Tracks the best epoch loss for plateau stopping.
class Plateau {
  public:
    explicit Plateau(std::size_t patience) : patience_(patience) {}
    // Returns true when this epoch improved on the best so far.
    bool update(double loss) {
        if (loss < best_) {
            best_ = loss;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }
    bool exhausted() const { return patience_ > 0 && stale_ >= patience_; }

  private:
    std::size_t patience_;
    std::size_t stale_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace

// ---- config -----------------------------------------------------------------

LossWeights TrainConfig::effective_weights() const {
    LossWeights w = weights;
    if (ablation.no_ntp) w.alpha1 = 0.0;
    if (ablation.no_cs) w.alpha2 = 0.0;
    return w;
}

void TrainConfig::validate() const {
    encoder.validate();
    weights.validate();
    effective_weights().validate();
    aug.validate();
    if (k_ntp < 1) throw ConfigError("k_ntp must be >= 1");
    if (!(pretrain_lr > 0.0) || !(probe_lr > 0.0) || !(supervised_lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (pretrain_batch < 1 || probe_batch < 1) throw ConfigError("batch sizes must be >= 1");
    if (pretrain_epochs < 1 || probe_epochs < 1) throw ConfigError("epoch counts must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {
        {"encoder",
         {{"channels", encoder.channels},
          {"length", encoder.length},
          {"width", encoder.width},
          {"layers", encoder.layers},
          {"heads", encoder.heads},
          {"dropout", encoder.dropout},
          {"variant", std::string(to_string(encoder.variant))}}},
        {"weights", {{"alpha1", weights.alpha1}, {"alpha2", weights.alpha2}, {"tau", weights.tau}}},
        {"k_ntp", k_ntp},
        {"aug",
         {{"jitter_sigma", aug.jitter_sigma},
          {"interval_count_range", {aug.interval_count_range.first, aug.interval_count_range.second}},
          {"segment_count_range", {aug.segment_count_range.first, aug.segment_count_range.second}},
          {"rng_seed", aug.rng_seed}}},
        {"pretrain_lr", pretrain_lr},
        {"probe_lr", probe_lr},
        {"supervised_lr", supervised_lr},
        {"pretrain_batch", pretrain_batch},
        {"probe_batch", probe_batch},
        {"pretrain_epochs", pretrain_epochs},
        {"probe_epochs", probe_epochs},
        {"patience", patience},
        {"seed", seed},
        {"ablation",
         {{"no_ntp", ablation.no_ntp},
          {"no_cs", ablation.no_cs},
          {"no_neg_augment", ablation.no_neg_augment},
          {"reverse_neg", ablation.reverse_neg},
          {"use_nvp", ablation.use_nvp}}},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        const auto& e = j.at("encoder");
        c.encoder.channels = e.at("channels");
        c.encoder.length = e.at("length");
        c.encoder.width = e.at("width");
        c.encoder.layers = e.at("layers");
        c.encoder.heads = e.at("heads");
        c.encoder.dropout = e.at("dropout");
        c.encoder.variant = parse_variant(e.at("variant").get<std::string>());
        const auto& w = j.at("weights");
        c.weights = {w.at("alpha1"), w.at("alpha2"), w.at("tau")};
        c.k_ntp = j.at("k_ntp");
        const auto& a = j.at("aug");
        c.aug.jitter_sigma = a.at("jitter_sigma");
        c.aug.interval_count_range = {a.at("interval_count_range").at(0), a.at("interval_count_range").at(1)};
        c.aug.segment_count_range = {a.at("segment_count_range").at(0), a.at("segment_count_range").at(1)};
        c.aug.rng_seed = a.at("rng_seed");
        c.pretrain_lr = j.at("pretrain_lr");
        c.probe_lr = j.at("probe_lr");
        c.supervised_lr = j.at("supervised_lr");
        c.pretrain_batch = j.at("pretrain_batch");
        c.probe_batch = j.at("probe_batch");
        c.pretrain_epochs = j.at("pretrain_epochs");
        c.probe_epochs = j.at("probe_epochs");
        c.patience = j.at("patience");
        c.seed = j.at("seed");
        const auto& f = j.at("ablation");
        c.ablation = {f.at("no_ntp"), f.at("no_cs"), f.at("no_neg_augment"), f.at("reverse_neg"), f.at("use_nvp")};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed training config: ") + e.what());
    }
    return c;
}

// ---- metrics ------------------------------------------------------------------

nlohmann::json Metrics::to_json() const {
    return {{"accuracy", accuracy}, {"macro_f1", macro_f1}, {"per_class_f1", per_class_f1}, {"confusion", confusion}};
}

Metrics compute_metrics(const std::vector<int>& pred, const std::vector<int>& truth, std::size_t classes) {
    if (pred.size() != truth.size()) {
        throw ShapeError("metrics: " + std::to_string(pred.size()) + " predictions for " + std::to_string(truth.size()) + " labels");
    }
    if (truth.empty()) throw ShapeError("metrics: no samples");
    Metrics m;
    m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || truth[i] < 0 || static_cast<std::size_t>(pred[i]) >= classes || static_cast<std::size_t>(truth[i]) >= classes) {
            throw IndexError("metrics: class index outside [0, " + std::to_string(classes) + ")");
        }
        ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
    }
    std::size_t correct = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        correct += m.confusion[c][c];
        std::size_t predicted = 0, actual = 0;
        for (std::size_t o = 0; o < classes; ++o) {
            predicted += m.confusion[o][c];
            actual += m.confusion[c][o];
        }
        const double tp = static_cast<double>(m.confusion[c][c]);
        const double precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
        const double recall = actual ? tp / static_cast<double>(actual) : 0.0;
        m.per_class_f1.push_back(precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0);
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    m.macro_f1 = std::accumulate(m.per_class_f1.begin(), m.per_class_f1.end(), 0.0) / static_cast<double>(classes);
    return m;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
    if (values.empty()) return {0.0, 0.0};
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / n)};
}

// ---- pretraining ----------------------------------------------------------------

nlohmann::json EpochRecord::to_json() const {
    return {{"epoch", epoch}, {"step", step}, {"ntp_loss", ntp_loss}, {"cs_loss", cs_loss}, {"combined", combined}};
}

Checkpoint make_checkpoint(const CatParams& params, const PretextHeads& heads, const TrainConfig& cfg,
                           std::size_t epoch, std::size_t step, const nlohmann::json& extra) {
    Checkpoint ckpt;
    ckpt.manifest = extra.is_object() ? extra : nlohmann::json::object();
    ckpt.manifest["config"] = cfg.to_json();
    ckpt.manifest["epoch"] = epoch;
    ckpt.manifest["step"] = step;
    ckpt.manifest["seed"] = cfg.seed;
    store_params(ckpt, params.named_parameters(cfg.encoder), "encoder.");
    store_params(ckpt, heads.named_parameters());
    return ckpt;
}

std::pair<TrainConfig, CatParams> load_encoder(const Checkpoint& ckpt) {
    if (!ckpt.manifest.contains("config")) throw CheckpointError("checkpoint manifest lacks a training config");
    TrainConfig cfg = TrainConfig::from_json(ckpt.manifest.at("config"));
    CatParams params = CatParams::init(cfg.encoder, 0);
    ParamList list = params.named_parameters(cfg.encoder);
    restore_params(ckpt, list, "encoder.");
    return {cfg, std::move(params)};
}

PretrainResult pretrain(const MtsDataset& ds, const TrainConfig& cfg, const PretrainOptions& options) {
    cfg.validate();
    const EncoderConfig& enc = cfg.encoder;
    check_dims(ds, enc);
    const LossWeights w = cfg.effective_weights();
    const bool use_trend = w.alpha1 > 0.0;
    const bool use_cs = w.alpha2 > 0.0;

    PretrainResult result{CatParams::init(enc, derive_seed(cfg.seed, Stream::EncoderInit)),
                          PretextHeads::init(enc, derive_seed(cfg.seed, Stream::HeadInit)), {}};
    ParamList params = result.params.named_parameters(enc);
    append(params, result.heads.named_parameters());
    AdamState adam = AdamState::init(params, AdamConfig{.lr = cfg.pretrain_lr});

    std::mt19937_64 aug_rng(derive_seed(cfg.seed, Stream::Augment, cfg.aug.rng_seed));
    std::mt19937_64 dropout_rng(derive_seed(cfg.seed, Stream::Dropout));
    std::mt19937_64 trunc_rng(derive_seed(cfg.seed, Stream::Truncation));
    const ForwardContext ctx{true, enc.dropout, &dropout_rng};

    std::ofstream log_file;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        log_file.open(*options.out_dir / "log.jsonl", std::ios::trunc);
        if (!log_file) throw CheckpointError("cannot write " + (*options.out_dir / "log.jsonl").string());
    }
    auto save = [&](const std::string& file, std::size_t epoch, std::size_t step) {
        save_checkpoint(*options.out_dir / file,
                        make_checkpoint(result.params, result.heads, cfg, epoch, step, options.extra_manifest));
    };
    auto epoch_file = [](std::size_t epoch) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "epoch-%04zu.ckpt", epoch);
        return std::string(buf);
    };

    Plateau plateau(cfg.patience);
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
        double ntp_total = 0.0, cs_total = 0.0, combined_total = 0.0;
        const auto order = batch_indices(ds.size(), cfg.pretrain_batch, true,
                                         derive_seed(cfg.seed, Stream::PretrainOrder), epoch);
        for (const auto& idx : order) {
            const Tensor x = gather_batch(ds, idx).x;
            Tensor trend_loss = Tensor::scalar(0.0);
            Tensor contrast_loss = Tensor::scalar(0.0);
            if (use_trend) {
                trend_loss = cfg.ablation.use_nvp
                                 ? nvp_loss(result.params, enc, result.heads, build_nvp_batch(x, trunc_rng), ctx)
                                 : ntp_loss(result.params, enc, result.heads, build_ntp_batch(x, cfg.k_ntp, trunc_rng), ctx);
            }
            if (use_cs) {
                CsBatch cs = build_cs_batch(x, cfg.aug, aug_rng, !cfg.ablation.no_neg_augment);
                if (cfg.ablation.reverse_neg) cs = reverse_neg_mode(std::move(cs));
                contrast_loss = cs_loss(result.params, enc, result.heads, cs, w.tau, ctx);
            }
            const Tensor total = combined_loss(trend_loss, contrast_loss, w);
            const double value = total.item();
            if (!std::isfinite(value)) {
                throw NumericError("non-finite pretraining loss at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(step + 1) + (options.out_dir ? "; last good checkpoints kept in " + options.out_dir->string() : ""));
            }
            total.backward();
            adam_step(params, adam);
            zero_grads(params);
            ++step;
            ntp_total += trend_loss.item();
            cs_total += contrast_loss.item();
            combined_total += value;
        }
        const double n = static_cast<double>(order.size());
        EpochRecord rec{epoch, step, ntp_total / n, cs_total / n, combined_total / n};
        result.log.push_back(rec);
        const bool improved = plateau.update(rec.combined);
        if (options.out_dir) {
            log_file << rec.to_json().dump() << '\n' << std::flush;
            save(epoch_file(epoch), epoch, step);
            if (epoch > 2) std::filesystem::remove(*options.out_dir / epoch_file(epoch - 2));
            if (improved) save("best.ckpt", epoch, step);
        }
        if (options.on_epoch) options.on_epoch(rec);
        if (plateau.exhausted()) break;
    }
    if (options.out_dir) save("final.ckpt", result.log.back().epoch, step);
    return result;
}

// ---- evaluation --------------------------------------------------------------------

Tensor extract_features(const MtsDataset& ds, const CatParams& params, const EncoderConfig& config) {
    check_dims(ds, config);
    NoGradGuard no_grad;
    constexpr std::size_t kChunk = 64;
    std::vector<double> values;
    values.reserve(ds.size() * config.flat_width());
    for (const auto& idx : batch_indices(ds.size(), kChunk, false, 0)) {
        const Representation r = encode(gather_batch(ds, idx).x, params, config);
        values.insert(values.end(), r.flat.data().begin(), r.flat.data().end());
    }
    return Tensor::from({ds.size(), config.flat_width()}, std::move(values));
}

ProbeResult linear_probe(const MtsDataset& train, const MtsDataset& test, const CatParams& params,
                         const TrainConfig& cfg) {
    cfg.validate();
    const std::vector<bool> present = trainable_classes(train, test);
    const Tensor train_features = extract_features(train, params, cfg.encoder);
    const Tensor test_features = extract_features(test, params, cfg.encoder);

    std::mt19937_64 init_rng(derive_seed(cfg.seed, Stream::ProbeInit));
    const Linear head = Linear::init(cfg.encoder.flat_width(), train.class_count(), init_rng);
    ParamList head_params;
    head.append_params("probe", head_params);
    AdamState adam = AdamState::init(head_params, AdamConfig{.lr = cfg.probe_lr});

    ProbeResult result;
    Plateau plateau(cfg.patience);
    for (std::size_t epoch = 1; epoch <= cfg.probe_epochs; ++epoch) {
        double total = 0.0;
        const auto order = batch_indices(train.size(), cfg.probe_batch, true, derive_seed(cfg.seed, Stream::ProbeOrder), epoch);
        for (const auto& idx : order) {
            const Tensor loss = cross_entropy(head(index_select(train_features, idx)), gather_labels(train.labels, idx));
            loss.backward();
            adam_step(head_params, adam);
            zero_grads(head_params);
            total += loss.item();
        }
        result.train_loss.push_back(total / static_cast<double>(order.size()));
        plateau.update(result.train_loss.back());
        if (plateau.exhausted()) break;
    }
    NoGradGuard no_grad;
    result.metrics = compute_metrics(argmax_rows(head(test_features), present), test.labels, train.class_count());
    return result;
}

ProbeResult supervised_baseline(const MtsDataset& train, const MtsDataset& test, const TrainConfig& cfg) {
    cfg.validate();
    const EncoderConfig& enc = cfg.encoder;
    check_dims(train, enc);
    check_dims(test, enc);
    const std::vector<bool> present = trainable_classes(train, test);

    CatParams params = CatParams::init(enc, derive_seed(cfg.seed, Stream::SupervisedInit));
    std::mt19937_64 init_rng(derive_seed(cfg.seed, Stream::ProbeInit));
    const Linear head = Linear::init(enc.flat_width(), train.class_count(), init_rng);
    ParamList all = params.named_parameters(enc);
    head.append_params("head", all);
    AdamState adam = AdamState::init(all, AdamConfig{.lr = cfg.supervised_lr});
    std::mt19937_64 dropout_rng(derive_seed(cfg.seed, Stream::SupervisedDropout));
    const ForwardContext ctx{true, enc.dropout, &dropout_rng};

    ProbeResult result;
    Plateau plateau(cfg.patience);
    for (std::size_t epoch = 1; epoch <= cfg.probe_epochs; ++epoch) {
        double total = 0.0;
        const auto order = batch_indices(train.size(), cfg.probe_batch, true, derive_seed(cfg.seed, Stream::ProbeOrder), epoch);
        for (const auto& idx : order) {
            const MtsBatch b = gather_batch(train, idx);
            const Tensor loss = cross_entropy(head(encode(b.x, params, enc, ctx).flat), b.labels);
            if (!std::isfinite(loss.item())) throw NumericError("non-finite supervised loss at epoch " + std::to_string(epoch));
            loss.backward();
            adam_step(all, adam);
            zero_grads(all);
            total += loss.item();
        }
        result.train_loss.push_back(total / static_cast<double>(order.size()));
        plateau.update(result.train_loss.back());
        if (plateau.exhausted()) break;
    }
    NoGradGuard no_grad;
    result.metrics = compute_metrics(argmax_rows(head(extract_features(test, params, enc)), present), test.labels,
                                     train.class_count());
    return result;
}

std::vector<SweepRow> fewshot_sweep(const MtsDataset& train, const MtsDataset& test, const CatParams& pretrained,
                                    const TrainConfig& cfg, const std::vector<double>& fractions) {
    if (fractions.empty()) throw ConfigError("fewshot sweep needs at least one fraction");
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fraction " + std::to_string(f) + " outside (0, 1]");
    }
    std::vector<SweepRow> rows;
    for (double f : fractions) {
        for (const char* mode : {"probe", "supervised"}) {
            std::vector<double> acc, mf1;
            for (std::size_t r = 0; r < kSweepRepeats; ++r) {
                TrainConfig run = cfg;
                run.seed = cfg.seed + r;
                const MtsDataset sub = subsample(train, f, run.seed);
                const Metrics m = std::string_view(mode) == "probe" ? linear_probe(sub, test, pretrained, run).metrics
                                                                    : supervised_baseline(sub, test, run).metrics;
                acc.push_back(m.accuracy);
                mf1.push_back(m.macro_f1);
            }
            SweepRow row{f, mode};
            std::tie(row.accuracy_mean, row.accuracy_std) = mean_std(acc);
            std::tie(row.macro_f1_mean, row.macro_f1_std) = mean_std(mf1);
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace cass
