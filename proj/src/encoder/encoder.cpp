#include "cass/encoder.hpp"

#include <cmath>

#include "cass/errors.hpp"

namespace cass {

std::string_view to_string(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::Cat: return "cat";
        case EncoderVariant::SelfAggregate: return "self_aggregate";
        case EncoderVariant::ChannelSelf: return "channel_self";
        case EncoderVariant::NoAggregate: return "no_aggregate";
        case EncoderVariant::Tat: return "tat";
    }
    return "cat";
}

EncoderVariant parse_variant(std::string_view name) {
    for (EncoderVariant v : {EncoderVariant::Cat, EncoderVariant::SelfAggregate, EncoderVariant::ChannelSelf,
                             EncoderVariant::NoAggregate, EncoderVariant::Tat}) {
        if (to_string(v) == name) return v;
    }
    throw ConfigError("unknown encoder variant '" + std::string(name) + "'");
}

std::size_t EncoderConfig::representation_rows() const {
    return variant == EncoderVariant::Tat ? length : channels;
}

void EncoderConfig::validate() const {
    if (channels < 1) throw ConfigError("encoder.C must be >= 1");
    if (length < 2) throw ConfigError("encoder.T must be >= 2");
    if (width < 1) throw ConfigError("encoder.D must be >= 1");
    if (layers < 1) throw ConfigError("encoder.N must be >= 1");
    if (heads < 1 || width % heads != 0) {
        throw ConfigError("encoder.D (" + std::to_string(width) + ") must be divisible by encoder.heads (" +
                          std::to_string(heads) + ")");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder.dropout must be in [0, 1)");
}

Tensor sinusoidal_positions(std::size_t length, std::size_t width) {
    std::vector<double> table(length * width);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < width; ++i) {
            const double pair = static_cast<double>(i - i % 2);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(width));
            table[pos * width + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor::from({length, width}, std::move(table));
}

CatParams CatParams::init(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = config.width;
    CatParams p;
    p.time_embedding = xavier_uniform(config.channels, d, rng);
    p.channel_embedding = xavier_uniform(config.length, d, rng);
    p.positional = sinusoidal_positions(config.length, d);
    for (std::size_t i = 0; i < config.layers; ++i) {
        CoLayerParams l;
        l.time_attn = AttentionWeights::init(d, rng);
        l.channel_attn = AttentionWeights::init(d, rng);
        l.time_ffn = FfnWeights::init(d, config.ffn_hidden(), rng);
        l.channel_ffn = FfnWeights::init(d, config.ffn_hidden(), rng);
        l.time_norm1 = LayerNormParams::init(d);
        l.time_norm2 = LayerNormParams::init(d);
        l.channel_norm1 = LayerNormParams::init(d);
        l.channel_norm2 = LayerNormParams::init(d);
        p.layers.push_back(std::move(l));
    }
    p.aggregate = AttentionWeights::init(d, rng);
    return p;
}

ParamList CatParams::named_parameters(const EncoderConfig& config) const {
    const bool time_tower = config.variant != EncoderVariant::ChannelSelf;
    const bool has_aggregate =
        config.variant != EncoderVariant::ChannelSelf && config.variant != EncoderVariant::NoAggregate;
    ParamList out;
    if (time_tower) out.push_back({"embed.time", time_embedding});
    out.push_back({"embed.channel", channel_embedding});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string prefix = "layers." + std::to_string(i);
        const CoLayerParams& l = layers[i];
        if (time_tower) {
            l.time_attn.append_params(prefix + ".time_attn", out);
            l.time_ffn.append_params(prefix + ".time_ffn", out);
            l.time_norm1.append_params(prefix + ".time_norm1", out);
            l.time_norm2.append_params(prefix + ".time_norm2", out);
        }
        l.channel_attn.append_params(prefix + ".channel_attn", out);
        l.channel_ffn.append_params(prefix + ".channel_ffn", out);
        l.channel_norm1.append_params(prefix + ".channel_norm1", out);
        l.channel_norm2.append_params(prefix + ".channel_norm2", out);
    }
    if (has_aggregate) aggregate.append_params("aggregate", out);
    return out;
}

namespace {

void embed_check(const Tensor& x, const EncoderConfig& config) {
    if (x.dim() != 3 || x.size(1) != config.channels || x.size(2) != config.length) {
        throw ShapeError("embed: input " + shape_to_string(x.shape()) + " does not match [B x " +
                         std::to_string(config.channels) + " x " + std::to_string(config.length) + "]");
    }
}

}  // namespace

std::pair<Tensor, Tensor> embed(const Tensor& x, const CatParams& params, const EncoderConfig& config) {
    embed_check(x, config);
    Tensor e_t = add(matmul(transpose(x), params.time_embedding), params.positional);
    Tensor e_c = matmul(x, params.channel_embedding);
    return {e_t, e_c};
}

namespace {

// LayerNorm(FFN(b) + b) with b = LayerNorm(MHA(q, kv) + q).
Tensor tower_step(const Tensor& q_stream, const Tensor& kv_stream, const AttentionWeights& attn,
                  const FfnWeights& ffn_w, const LayerNormParams& norm1, const LayerNormParams& norm2,
                  std::size_t heads, const ForwardContext& ctx) {
    Tensor attended = ctx.maybe_dropout(multi_head_attention(q_stream, kv_stream, attn, heads));
    Tensor b = norm1(add(attended, q_stream));
    return norm2(add(ffn(b, ffn_w, ctx), b));
}

}  // namespace

std::pair<Tensor, Tensor> co_layer(const Tensor& a_t, const Tensor& a_c, const CoLayerParams& layer,
                                   const EncoderConfig& config, const ForwardContext& ctx) {
    const std::size_t h = config.heads;
    switch (config.variant) {
        case EncoderVariant::SelfAggregate:
            return {tower_step(a_t, a_t, layer.time_attn, layer.time_ffn, layer.time_norm1, layer.time_norm2, h, ctx),
                    tower_step(a_c, a_c, layer.channel_attn, layer.channel_ffn, layer.channel_norm1,
                               layer.channel_norm2, h, ctx)};
        case EncoderVariant::ChannelSelf:
            return {a_t, tower_step(a_c, a_c, layer.channel_attn, layer.channel_ffn, layer.channel_norm1,
                                    layer.channel_norm2, h, ctx)};
        default:
            return {tower_step(a_t, a_c, layer.time_attn, layer.time_ffn, layer.time_norm1, layer.time_norm2, h, ctx),
                    tower_step(a_c, a_t, layer.channel_attn, layer.channel_ffn, layer.channel_norm1,
                               layer.channel_norm2, h, ctx)};
    }
}

Representation aggregate(const Tensor& a_t, const Tensor& a_c, const CatParams& params,
                         const EncoderConfig& config) {
    Tensor rows = config.variant == EncoderVariant::Tat
                      ? multi_head_attention(a_t, a_c, params.aggregate, config.heads)
                      : multi_head_attention(a_c, a_t, params.aggregate, config.heads);
    const std::size_t batch = rows.size(0);
    Tensor flat = reshape(rows, {batch, rows.size(1) * rows.size(2)});
    return {rows, flat};
}

Representation encode(const Tensor& x, const CatParams& params, const EncoderConfig& config,
                      const ForwardContext& ctx) {
    if (x.dim() == 2) {
        Representation r = encode(reshape(x, {1, x.size(0), x.size(1)}), params, config, ctx);
        const Shape rows{r.per_channel.size(1), r.per_channel.size(2)};
        return {reshape(r.per_channel, rows), r.flat};
    }
    if (params.layers.size() != config.layers) {
        throw ConfigError("encoder params hold " + std::to_string(params.layers.size()) +
                          " layers, config expects " + std::to_string(config.layers));
    }
    Tensor a_t, a_c;
    if (config.variant == EncoderVariant::ChannelSelf) {
        embed_check(x, config);
        a_c = matmul(x, params.channel_embedding);
    } else {
        std::tie(a_t, a_c) = embed(x, params, config);
    }
    for (const CoLayerParams& layer : params.layers) {
        std::tie(a_t, a_c) = co_layer(a_t, a_c, layer, config, ctx);
    }
    switch (config.variant) {
        case EncoderVariant::ChannelSelf:
        case EncoderVariant::NoAggregate: {
            const std::size_t batch = a_c.size(0);
            return {a_c, reshape(a_c, {batch, a_c.size(1) * a_c.size(2)})};
        }
        default:
            return aggregate(a_t, a_c, params, config);
    }
}

std::pair<Tensor, Tensor> co_layer_attention(const Tensor& a_t, const Tensor& a_c,
                                             const CoLayerParams& layer, std::size_t heads,
                                             bool interactive) {
    if (interactive) {
        return {multi_head_attention(a_t, a_c, layer.time_attn, heads),
                multi_head_attention(a_c, a_t, layer.channel_attn, heads)};
    }
    return {multi_head_attention(a_t, a_t, layer.time_attn, heads),
            multi_head_attention(a_c, a_c, layer.channel_attn, heads)};
}

}  // namespace cass
