#pragma once

// Channel-aware Transformer: embedding layer, N interactive co-transformer
// layers (time tower <-> channel tower cross-attention) and an aggregate
// layer folding time-wise features into channel-wise ones.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cass/nn.hpp"
#include "cass/tensor.hpp"

namespace cass {

enum class EncoderVariant {
    Cat,            // interactive co-transformer + aggregate
    SelfAggregate,  // two independent self-attention towers + aggregate
    ChannelSelf,    // single self-attention tower over channels
    NoAggregate,    // co-transformer, channel stream returned directly
    Tat,            // co-transformer, channel features folded into the time axis
};

std::string_view to_string(EncoderVariant v);
EncoderVariant parse_variant(std::string_view name);  // throws ConfigError

struct EncoderConfig {
    std::size_t channels = 1;    // C
    std::size_t length = 2;      // T
    std::size_t width = 512;     // D
    std::size_t layers = 8;      // N
    std::size_t heads = 8;
    double dropout = 0.2;
    EncoderVariant variant = EncoderVariant::Cat;

    std::size_t ffn_hidden() const { return 4 * width; }
    // Rows of the representation: C, or T for the time-aware variant.
    std::size_t representation_rows() const;
    std::size_t flat_width() const { return representation_rows() * width; }
    void validate() const;  // throws ConfigError
};

struct CoLayerParams {
    AttentionWeights time_attn;     // Q from time stream, K/V from channel stream
    AttentionWeights channel_attn;  // Q from channel stream, K/V from time stream
    FfnWeights time_ffn;
    FfnWeights channel_ffn;
    LayerNormParams time_norm1, time_norm2;
    LayerNormParams channel_norm1, channel_norm2;
};

struct CatParams {
    Tensor time_embedding;     // W_t: [C, D]
    Tensor channel_embedding;  // W_c: [T, D]
    Tensor positional;         // e_pos: [T, D], fixed sinusoidal, never trained
    std::vector<CoLayerParams> layers;
    AttentionWeights aggregate;

    static CatParams init(const EncoderConfig& config, std::uint64_t seed);

    // Trainable parameters actually used by the configured variant, with
    // stable dotted names (e.g. "layers.0.time_attn.query").
    ParamList named_parameters(const EncoderConfig& config) const;
};

// Sinusoidal table: even columns sin(pos / 10000^(2i/D)), odd columns cos(...).
Tensor sinusoidal_positions(std::size_t length, std::size_t width);

struct Representation {
    Tensor per_channel;  // [B, rows, D] (rows = C, or T for Tat); [rows, D] for unbatched input
    Tensor flat;         // [B, rows * D]; [1, rows * D] for unbatched input
};

// x: [B, C, T] -> (e_t [B, T, D], e_c [B, C, D]).
std::pair<Tensor, Tensor> embed(const Tensor& x, const CatParams& params, const EncoderConfig& config);

// One interactive layer. Both towers read the layer inputs (parallel update).
std::pair<Tensor, Tensor> co_layer(const Tensor& a_t, const Tensor& a_c, const CoLayerParams& layer,
                                   const EncoderConfig& config, const ForwardContext& ctx = {});

// Cross-attention from channel queries onto time keys/values; no residual or norm.
Representation aggregate(const Tensor& a_t, const Tensor& a_c, const CatParams& params,
                         const EncoderConfig& config);

// x: [B, C, T] or [C, T].
Representation encode(const Tensor& x, const CatParams& params, const EncoderConfig& config,
                      const ForwardContext& ctx = {});

// Only the attention part of a co_layer (projections, scores, softmax, mixing)
// on already-embedded streams; used for cost measurements. When `interactive`
// is false the towers self-attend instead.
std::pair<Tensor, Tensor> co_layer_attention(const Tensor& a_t, const Tensor& a_c,
                                             const CoLayerParams& layer, std::size_t heads,
                                             bool interactive);

}  // namespace cass
