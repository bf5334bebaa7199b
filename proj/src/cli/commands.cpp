#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>

#include <CLI11.hpp>

#include "cass/augment.hpp"
#include "cass/checkpoint.hpp"
#include "cass/cli.hpp"
#include "cass/errors.hpp"
#include "cass/flops.hpp"
#include "cass/log.hpp"

#ifndef CASS_VERSION_STRING
#define CASS_VERSION_STRING "unknown"
#endif

namespace cass::cli {
namespace {

namespace fs = std::filesystem;

struct Splits {
    MtsDataset train;
    std::optional<MtsDataset> test;
};

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

// Separate test file, or a stratified split of a labeled file, or (unlabeled)
// everything for training.
Splits load_splits(const fs::path& data, const std::string& test, const DataOptions& options) {
    MtsDataset ds = load_dataset(data, options);
    if (!test.empty()) {
        MtsDataset t = load_dataset(test, options);
        if (t.channels() != ds.channels() || t.length() != ds.length()) {
            throw ShapeError("test samples are [" + std::to_string(t.channels()) + "x" + std::to_string(t.length()) +
                             "], train samples are [" + std::to_string(ds.channels()) + "x" + std::to_string(ds.length()) + "]");
        }
        return {std::move(ds), std::move(t)};
    }
    if (!ds.labeled()) return {std::move(ds), std::nullopt};
    auto [train, held_out] = stratified_split(ds, options.test_fraction, options.split_seed);
    return {std::move(train), std::move(held_out)};
}

void normalize_splits(Splits& s, const NormStats& stats) {
    s.train = apply_norm(s.train, stats);
    if (s.test) s.test = apply_norm(*s.test, stats);
}

void require_dims(const MtsDataset& ds, const EncoderConfig& enc) {
    if (ds.channels() != enc.channels || ds.length() != enc.length) {
        throw ShapeError("data samples are [" + std::to_string(ds.channels()) + "x" + std::to_string(ds.length()) +
                         "] but the checkpoint encoder expects [" + std::to_string(enc.channels) + "x" +
                         std::to_string(enc.length) + "]");
    }
}

// Norm stats stored beside the checkpoint, or fitted on the training split.
NormStats stats_for(const fs::path& checkpoint, const MtsDataset& train) {
    const fs::path beside = checkpoint.parent_path() / "norm_stats.json";
    if (fs::exists(beside)) return NormStats::from_json(read_json(beside));
    return fit_norm_stats(train);
}

struct LoadedModel {
    TrainConfig train;
    DataOptions data;
    CatParams params;
};

LoadedModel load_model(const fs::path& checkpoint) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    auto [cfg, params] = load_encoder(ckpt);
    DataOptions data = ckpt.manifest.contains("data") ? DataOptions::from_json(ckpt.manifest.at("data")) : DataOptions{};
    return {cfg, data, std::move(params)};
}

Splits probe_splits(const LoadedModel& model, const fs::path& checkpoint, const fs::path& data, const std::string& test) {
    Splits s = load_splits(data, test, model.data);
    require_dims(s.train, model.train.encoder);
    if (!s.test) throw DataError("probing needs labels: the data file is unlabeled and no --test file was given");
    if (model.data.normalize) normalize_splits(s, stats_for(checkpoint, s.train));
    return s;
}

int cmd_pretrain(const std::string& config_path, const fs::path& data, const std::string& test, const fs::path& out_dir,
                 std::optional<std::uint64_t> seed, std::optional<std::size_t> epochs, std::ostream& out) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) cfg.train.seed = *seed;
    if (epochs) cfg.train.pretrain_epochs = *epochs;

    Splits s = load_splits(data, test, cfg.data);
    EncoderConfig& enc = cfg.train.encoder;
    if (!config_path.empty()) {
        const RunConfig defaults;
        const bool set_c = enc.channels != defaults.train.encoder.channels;
        const bool set_t = enc.length != defaults.train.encoder.length;
        if ((set_c && enc.channels != s.train.channels()) || (set_t && enc.length != s.train.length())) require_dims(s.train, enc);
    }
    enc.channels = s.train.channels();
    enc.length = s.train.length();
    cfg.train.validate();

    fs::create_directories(out_dir);
    const std::string fingerprint = fingerprint_file(data);
    nlohmann::json manifest{{"command", "pretrain"},
                            {"config", cfg.train.to_json()},
                            {"data", cfg.data.to_json()},
                            {"data_path", data.string()},
                            {"data_fingerprint", fingerprint},
                            {"code_version", CASS_VERSION_STRING},
                            {"seed", cfg.train.seed},
                            {"started_at", utc_now()}};
    if (!test.empty()) manifest["test_fingerprint"] = fingerprint_file(test);
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

    if (cfg.data.normalize) {
        const NormStats stats = fit_norm_stats(s.train);
        write_text(out_dir / "norm_stats.json", stats.to_json().dump(2) + "\n");
        normalize_splits(s, stats);
    }

    PretrainOptions options;
    options.out_dir = out_dir;
    options.extra_manifest = {{"data", cfg.data.to_json()}, {"data_fingerprint", fingerprint}, {"code_version", CASS_VERSION_STRING}};
    options.on_epoch = [&out](const EpochRecord& r) { out << r.to_json().dump() << "\n" << std::flush; };
    const PretrainResult result = pretrain(s.train, cfg.train, options);
    out << "pretrained " << result.log.size() << " epochs; checkpoint " << (out_dir / "final.ckpt").string() << "\n";
    return kOk;
}

int cmd_probe(const fs::path& checkpoint, const fs::path& data, const std::string& test, const fs::path& out_dir,
              double fraction, std::optional<std::uint64_t> seed, bool random_encoder, std::ostream& out) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("--fraction must be in (0, 1]");
    LoadedModel model = load_model(checkpoint);
    if (seed) model.train.seed = *seed;
    Splits s = probe_splits(model, checkpoint, data, test);
    const MtsDataset train = fraction < 1.0 ? subsample(s.train, fraction, model.train.seed) : s.train;
    const CatParams params = random_encoder ? CatParams::init(model.train.encoder, model.train.seed) : model.params;
    const ProbeResult r = linear_probe(train, *s.test, params, model.train);

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "fraction,seed,encoder,train_samples,test_samples,accuracy,macro_f1\n";
    csv << std::setprecision(17) << fraction << ',' << model.train.seed << ',' << (random_encoder ? "random" : "pretrained") << ','
        << train.size() << ',' << s.test->size() << ',' << r.metrics.accuracy << ',' << r.metrics.macro_f1 << '\n';
    write_text(out_dir / "probe.csv", csv.str());
    write_text(out_dir / "probe_metrics.json", r.metrics.to_json().dump(2) + "\n");
    out << "accuracy " << r.metrics.accuracy << "\nmacro_f1 " << r.metrics.macro_f1 << "\n";
    return kOk;
}

int cmd_fewshot(const fs::path& checkpoint, const fs::path& data, const std::string& test, const fs::path& out_dir,
                const std::vector<double>& fractions, std::ostream& out) {
    if (fractions.empty()) throw ConfigError("--fractions needs at least one value");
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fraction " + std::to_string(f) + " outside (0, 1]");
    }
    const LoadedModel model = load_model(checkpoint);
    const Splits s = probe_splits(model, checkpoint, data, test);
    const auto rows = fewshot_sweep(s.train, *s.test, model.params, model.train, fractions);

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "fraction,mode,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std\n" << std::setprecision(17);
    for (const SweepRow& r : rows) {
        csv << r.fraction << ',' << r.mode << ',' << r.accuracy_mean << ',' << r.accuracy_std << ',' << r.macro_f1_mean << ','
            << r.macro_f1_std << '\n';
        out << std::setprecision(4) << r.fraction << "  " << std::setw(10) << std::left << r.mode << std::right << "  acc "
            << r.accuracy_mean << " +- " << r.accuracy_std << "  mf1 " << r.macro_f1_mean << " +- " << r.macro_f1_std << "\n";
    }
    write_text(out_dir / "fewshot.csv", csv.str());
    return kOk;
}

int cmd_augment_preview(const fs::path& data, const std::string& strategy, std::uint64_t seed, std::size_t index,
                        const fs::path& out_csv, const std::string& config_path, std::ostream& out) {
    if (strategy != "interval" && strategy != "sync" && strategy != "async") {
        throw ConfigError("unknown strategy '" + strategy + "' (expected interval, sync or async)");
    }
    const RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    cfg.train.aug.validate();
    const MtsDataset ds = load_dataset(data, cfg.data);
    const Tensor x = ds.sample(index);
    std::mt19937_64 rng(seed);
    const Tensor y = strategy == "interval" ? interval_adjust(x, cfg.train.aug, rng)
                     : strategy == "sync"   ? sync_permute(x, cfg.train.aug, rng)
                                            : async_permute(x, cfg.train.aug, rng);
    std::ostringstream csv;
    csv << "channel,t,original,augmented\n" << std::setprecision(17);
    const std::size_t t_len = ds.length();
    for (std::size_t c = 0; c < ds.channels(); ++c) {
        for (std::size_t t = 0; t < t_len; ++t) {
            csv << c << ',' << t << ',' << x.data()[c * t_len + t] << ',' << y.data()[c * t_len + t] << '\n';
        }
    }
    write_text(out_csv, csv.str());
    out << "wrote " << out_csv.string() << "\n";
    return kOk;
}

int cmd_flops(long long t, long long c, long long d, std::ostream& out) {
    if (t <= 0 || c <= 0 || d <= 0) throw ConfigError("T, C and D must be positive");
    const auto ti = static_cast<std::uint64_t>(t), ci = static_cast<std::uint64_t>(c), di = static_cast<std::uint64_t>(d);
    const std::uint64_t inter = flop_estimate(ti, ci, di, true);
    const std::uint64_t self = flop_estimate(ti, ci, di, false);
    out << "interactive " << inter << "\nself " << self << "\nratio " << std::setprecision(6)
        << static_cast<double>(self) / static_cast<double>(inter) << "\n";
    return kOk;
}

int cmd_synth(const fs::path& out_path, const SyntheticConfig& sc, std::ostream& out) {
    write_text(out_path, write_ts(make_synthetic(sc)));
    out << "wrote " << out_path.string() << "\n";
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Channel-aware transformer pretraining toolkit"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Silence warnings");

    std::string config, data, test, out_dir, checkpoint, strategy, out_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    double fraction = 1.0;
    bool random_encoder = false;
    std::vector<double> fractions;
    std::uint64_t preview_seed = 0;
    std::size_t index = 0;
    long long t = 0, c = 0, d = 0;
    SyntheticConfig sc;

    auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
    pre->add_option("--config", config, "Config file");
    pre->add_option("--data", data, "Training data (.ts or .csv)")->required();
    pre->add_option("--test", test, "Held-out data; otherwise labeled data is split");
    pre->add_option("--out", out_dir, "Output directory")->required();
    pre->add_option("--seed", seed, "Override the config seed");
    pre->add_option("--epochs", epochs, "Override pretrain_epochs");

    auto* probe = app.add_subcommand("probe", "Linear probe on a frozen encoder");
    probe->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    probe->add_option("--data", data, "Labeled data")->required();
    probe->add_option("--test", test, "Held-out data");
    probe->add_option("--out", out_dir, "Output directory")->required();
    probe->add_option("--fraction", fraction, "Fraction of labeled training samples");
    probe->add_option("--seed", seed, "Override the seed");
    probe->add_flag("--random-encoder", random_encoder, "Probe a freshly initialised encoder instead");

    auto* few = app.add_subcommand("fewshot", "Probe vs supervised over label fractions");
    few->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    few->add_option("--data", data, "Labeled data")->required();
    few->add_option("--test", test, "Held-out data");
    few->add_option("--out", out_dir, "Output directory")->required();
    few->add_option("--fractions", fractions, "Label fractions, e.g. 0.01,0.1,0.5")->delimiter(',');

    auto* preview = app.add_subcommand("augment-preview", "Write one sample and its augmentation as CSV");
    preview->add_option("--data", data, "Data file")->required();
    preview->add_option("--strategy", strategy, "interval, sync or async")->required();
    preview->add_option("--seed", preview_seed, "RNG seed");
    preview->add_option("--index", index, "Sample index");
    preview->add_option("--out", out_file, "Output CSV")->required();
    preview->add_option("--config", config, "Config file (aug.* and data.* keys)");

    auto* flops = app.add_subcommand("flops", "Attention-score cost: interactive vs self-attention");
    flops->add_option("T", t)->required();
    flops->add_option("C", c)->required();
    flops->add_option("D", d)->required();

    auto* synth = app.add_subcommand("synth", "Write the synthetic two-class fixture as .ts");
    synth->add_option("--out", out_file, "Output .ts file")->required();
    synth->add_option("--samples", sc.samples);
    synth->add_option("--channels", sc.channels);
    synth->add_option("--length", sc.length);
    synth->add_option("--trend", sc.trend_amplitude);
    synth->add_option("--noise", sc.noise);
    synth->add_option("--seed", sc.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    log::set_quiet(quiet);

    try {
        if (*pre) return cmd_pretrain(config, data, test, out_dir, seed, epochs, out);
        if (*probe) return cmd_probe(checkpoint, data, test, out_dir, fraction, seed, random_encoder, out);
        if (*few) return cmd_fewshot(checkpoint, data, test, out_dir, fractions, out);
        if (*preview) return cmd_augment_preview(data, strategy, preview_seed, index, out_file, config, out);
        if (*flops) return cmd_flops(t, c, d, out);
        if (*synth) return cmd_synth(out_file, sc, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << "\n";
        return kCheckpointError;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << "\n";
        return kCheckpointError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}

}  // namespace cass::cli
