#include "cass/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cass/errors.hpp"
#include "cass/log.hpp"

namespace cass {
namespace {

std::pair<std::size_t, std::size_t> sample_dims(const Tensor& x) {
    if (x.dim() != 2) throw ShapeError("expected a [C, T] sample, got " + shape_to_string(x.shape()));
    return {x.shape()[0], x.shape()[1]};
}

void check_batch(const Tensor& x, const char* what) {
    if (x.dim() != 3) throw ShapeError(std::string(what) + ": expected [B, C, T], got " + shape_to_string(x.shape()));
}

Tensor sample_at(const Tensor& x, std::size_t i) {
    const std::size_t c = x.shape()[1];
    const std::size_t t = x.shape()[2];
    const auto src = x.data().subspan(i * c * t, c * t);
    return Tensor::from({c, t}, std::vector<double>(src.begin(), src.end()));
}

// Distinct 1-based steps in [1, T-1], in draw order.
std::vector<std::size_t> draw_steps(std::size_t length, std::size_t count, std::mt19937_64& rng) {
    std::vector<std::size_t> pool(length - 1);
    std::iota(pool.begin(), pool.end(), std::size_t{1});
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(count);
    return pool;
}

Tensor stack(std::span<const Tensor> samples) {
    std::vector<Tensor> rows;
    rows.reserve(samples.size());
    for (const Tensor& s : samples) {
        Shape shape = s.shape();
        shape.insert(shape.begin(), 1);
        rows.push_back(reshape(s, shape));
    }
    return concat(rows);
}

// [N, rows, D] -> [N * rows, D]
Tensor flatten_rows(const Tensor& per_channel) {
    const Shape& s = per_channel.shape();
    return reshape(per_channel, {s[0] * s[1], s[2]});
}

void require_channel_rows(const EncoderConfig& config, const char* task) {
    if (config.variant == EncoderVariant::Tat) {
        throw ConfigError(std::string(task) + " needs channel-wise features; variant 'tat' produces time-wise ones");
    }
}

}  // namespace

void LossWeights::validate() const {
    if (alpha1 < 0.0 || alpha2 < 0.0) throw ConfigError("loss weights must be >= 0");
    if (alpha1 == 0.0 && alpha2 == 0.0) throw ConfigError("alpha1 and alpha2 cannot both be 0");
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
}

Tensor truncate_series(const Tensor& x, std::size_t t) {
    const auto [channels, length] = sample_dims(x);
    if (t < 1 || t >= length) throw IndexError("truncation step " + std::to_string(t) + " outside [1, T-1]");
    std::vector<double> out(x.numel(), 0.0);
    const auto src = x.data();
    for (std::size_t c = 0; c < channels; ++c) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(c * length), t, out.begin() + static_cast<std::ptrdiff_t>(c * length));
    }
    return Tensor::from(x.shape(), std::move(out));
}

NtpInstance make_ntp_instance(const Tensor& x, std::size_t t) {
    const auto [channels, length] = sample_dims(x);
    NtpInstance inst{truncate_series(x, t), t, std::vector<int>(channels)};
    const auto src = x.data();
    for (std::size_t c = 0; c < channels; ++c) {
        inst.labels[c] = src[c * length + t] >= src[c * length + t - 1] ? 1 : 0;
    }
    return inst;
}

std::vector<NtpInstance> make_ntp_instances(const Tensor& x, std::size_t k_ntp, std::mt19937_64& rng) {
    const std::size_t length = sample_dims(x).second;
    if (length < 3) throw ConfigError("NTP needs T >= 3, got " + std::to_string(length));
    if (k_ntp < 1) throw ConfigError("k_ntp must be >= 1");
    std::vector<std::size_t> steps;
    if (k_ntp <= length - 1) {
        steps = draw_steps(length, k_ntp, rng);
    } else {
        log::warn("k_ntp = " + std::to_string(k_ntp) + " exceeds T - 1 = " + std::to_string(length - 1) +
                  "; truncation steps drawn with replacement");
        std::uniform_int_distribution<std::size_t> pick(1, length - 1);
        for (std::size_t i = 0; i < k_ntp; ++i) steps.push_back(pick(rng));
    }
    std::vector<NtpInstance> out;
    out.reserve(k_ntp);
    for (std::size_t t : steps) out.push_back(make_ntp_instance(x, t));
    return out;
}

NtpBatch build_ntp_batch(const Tensor& x, std::size_t k_ntp, std::mt19937_64& rng) {
    check_batch(x, "build_ntp_batch");
    NtpBatch batch;
    batch.samples = x.shape()[0];
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < batch.samples; ++i) {
        for (NtpInstance& inst : make_ntp_instances(sample_at(x, i), k_ntp, rng)) {
            inputs.push_back(std::move(inst.truncated));
            batch.labels.insert(batch.labels.end(), inst.labels.begin(), inst.labels.end());
        }
    }
    batch.inputs = stack(inputs);
    return batch;
}

CsBatch build_cs_batch(const Tensor& originals, const AugmentConfig& cfg, std::mt19937_64& rng,
                       bool with_negatives) {
    check_batch(originals, "build_cs_batch");
    CsBatch batch;
    std::vector<Tensor> samples;
    auto push = [&](Tensor s, std::size_t origin, Polarity p) {
        samples.push_back(std::move(s));
        batch.origin.push_back(origin);
        batch.polarity.push_back(p);
    };
    for (std::size_t i = 0; i < originals.shape()[0]; ++i) {
        Tensor x = sample_at(originals, i);
        push(x, i, Polarity::Original);
        push(interval_adjust(x, cfg, rng), i, Polarity::Positive);
        push(sync_permute(x, cfg, rng), i, Polarity::Positive);
        if (with_negatives) {
            push(async_permute(x, cfg, rng), i, Polarity::Negative);
            push(async_permute(x, cfg, rng), i, Polarity::Negative);
        }
    }
    batch.samples = stack(samples);
    return batch;
}

CsBatch reverse_neg_mode(CsBatch batch) {
    for (Polarity& p : batch.polarity) {
        if (p == Polarity::Negative) p = Polarity::Positive;
    }
    return batch;
}

std::vector<ContrastiveGroup> cs_groups(const CsBatch& batch) {
    std::vector<ContrastiveGroup> groups;
    for (std::size_t a = 0; a < batch.size(); ++a) {
        if (batch.polarity[a] != Polarity::Original) continue;
        ContrastiveGroup g{a, {}};
        for (std::size_t m = 0; m < batch.size(); ++m) {
            if (batch.origin[m] == batch.origin[a] && batch.polarity[m] == Polarity::Positive) g.positives.push_back(m);
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

PretextHeads PretextHeads::init(const EncoderConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t d = config.width;
    PretextHeads h;
    h.ntp = Linear::init(d, 2, rng);
    h.cs_inner = Linear::init(config.flat_width(), d, rng);
    h.cs_outer = Linear::init(d, kProjectionWidth, rng);
    h.nvp = Linear::init(d, 1, rng);
    return h;
}

ParamList PretextHeads::named_parameters() const {
    ParamList out;
    ntp.append_params("heads.ntp", out);
    cs_inner.append_params("heads.cs_inner", out);
    cs_outer.append_params("heads.cs_outer", out);
    nvp.append_params("heads.nvp", out);
    return out;
}

Tensor ntp_loss(const CatParams& params, const EncoderConfig& config, const PretextHeads& heads,
                const NtpBatch& batch, const ForwardContext& ctx) {
    require_channel_rows(config, "NTP");
    const Representation r = encode(batch.inputs, params, config, ctx);
    const Tensor logits = heads.ntp(flatten_rows(r.per_channel));
    const Tensor total = cross_entropy(logits, batch.labels, Reduction::Sum);
    return scale(total, 1.0 / static_cast<double>(batch.samples));
}

Tensor cs_projections(const Tensor& flat, const PretextHeads& heads) {
    return l2_normalize_rows(heads.cs_outer(gelu(heads.cs_inner(flat))));
}

Tensor cs_loss_from_projections(const Tensor& projections, const CsBatch& batch, double tau) {
    const Tensor sim = matmul(projections, transpose(projections));
    const auto groups = cs_groups(batch);
    return info_nce(sim, groups, tau);
}

Tensor cs_loss(const CatParams& params, const EncoderConfig& config, const PretextHeads& heads,
               const CsBatch& batch, double tau, const ForwardContext& ctx) {
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    const Representation r = encode(batch.samples, params, config, ctx);
    return cs_loss_from_projections(cs_projections(r.flat, heads), batch, tau);
}

std::size_t nvp_point_count(std::size_t length) {
    return static_cast<std::size_t>(std::ceil(0.15 * static_cast<double>(length - 1) - 1e-12));
}

NvpBatch build_nvp_batch(const Tensor& x, std::mt19937_64& rng) {
    check_batch(x, "build_nvp_batch");
    const std::size_t channels = x.shape()[1];
    const std::size_t length = x.shape()[2];
    if (length < 3) throw ConfigError("NVP needs T >= 3, got " + std::to_string(length));
    const std::size_t points = std::max<std::size_t>(1, nvp_point_count(length));
    NvpBatch batch;
    batch.samples = x.shape()[0];
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < batch.samples; ++i) {
        const Tensor s = sample_at(x, i);
        const auto src = s.data();
        for (std::size_t t : draw_steps(length, points, rng)) {
            inputs.push_back(truncate_series(s, t));
            for (std::size_t c = 0; c < channels; ++c) batch.targets.push_back(src[c * length + t]);
        }
    }
    batch.inputs = stack(inputs);
    return batch;
}

Tensor nvp_loss(const CatParams& params, const EncoderConfig& config, const PretextHeads& heads,
                const NvpBatch& batch, const ForwardContext& ctx) {
    require_channel_rows(config, "NVP");
    const Representation r = encode(batch.inputs, params, config, ctx);
    const Tensor pred = heads.nvp(flatten_rows(r.per_channel));
    const Tensor target = Tensor::from(pred.shape(), batch.targets);
    return scale(squared_error_sum(pred, target), 1.0 / static_cast<double>(batch.samples));
}

Tensor combined_loss(const Tensor& ntp, const Tensor& cs, const LossWeights& weights) {
    return add(scale(ntp, weights.alpha1), scale(cs, weights.alpha2));
}

double combined_loss(double ntp, double cs, const LossWeights& weights) {
    return weights.alpha1 * ntp + weights.alpha2 * cs;
}

}  // namespace cass
