#pragma once

// Parameterised building blocks: affine maps, multi-head attention, FFN.

#include <cstdint>
#include <random>
#include <string>

#include "cass/ops.hpp"
#include "cass/tensor.hpp"

namespace cass {

// Training-time switches threaded through forward passes.
struct ForwardContext {
    bool training = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;  // required when training with dropout > 0

    Tensor maybe_dropout(const Tensor& x) const;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear init(std::size_t in, std::size_t out, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
    void append_params(const std::string& prefix, ParamList& out) const;
};

struct LayerNormParams {
    Tensor gain;  // [D], ones
    Tensor bias;  // [D], zeros

    static LayerNormParams init(std::size_t width);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
    void append_params(const std::string& prefix, ParamList& out) const;
};

// Q/K/V projections plus the output projection, all D x D without bias.
struct AttentionWeights {
    Tensor query, key, value, output;

    static AttentionWeights init(std::size_t width, std::mt19937_64& rng);
    void append_params(const std::string& prefix, ParamList& out) const;
};

// q_in: [B, Lq, D] (or [Lq, D]); kv_in: [B, Lk, D] (or [Lk, D]).
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionWeights& w,
                            std::size_t heads);

struct FfnWeights {
    Linear inner;  // D -> D_ff
    Linear outer;  // D_ff -> D

    static FfnWeights init(std::size_t width, std::size_t hidden, std::mt19937_64& rng);
    void append_params(const std::string& prefix, ParamList& out) const;
};

// outer(dropout(gelu(inner(x))))
Tensor ffn(const Tensor& x, const FfnWeights& w, const ForwardContext& ctx = {});

}  // namespace cass
