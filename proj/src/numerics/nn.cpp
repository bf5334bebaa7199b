#include "cass/nn.hpp"

#include <cmath>

#include "cass/errors.hpp"

namespace cass {

Tensor ForwardContext::maybe_dropout(const Tensor& x) const {
    if (!training || dropout <= 0.0) return x;
    if (!rng) throw ConfigError("dropout requested without an RNG");
    return cass::dropout(x, dropout, *rng);
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(fan_in * fan_out);
    for (double& v : values) v = dist(rng);
    return Tensor::from({fan_in, fan_out}, std::move(values), true);
}

Linear Linear::init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    return {xavier_uniform(in, out, rng), Tensor::zeros({out}, true)};
}

void Linear::append_params(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

LayerNormParams LayerNormParams::init(std::size_t width) {
    return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

void LayerNormParams::append_params(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".bias", bias});
}

AttentionWeights AttentionWeights::init(std::size_t width, std::mt19937_64& rng) {
    AttentionWeights w;
    w.query = xavier_uniform(width, width, rng);
    w.key = xavier_uniform(width, width, rng);
    w.value = xavier_uniform(width, width, rng);
    w.output = xavier_uniform(width, width, rng);
    return w;
}

void AttentionWeights::append_params(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".query", query});
    out.push_back({prefix + ".key", key});
    out.push_back({prefix + ".value", value});
    out.push_back({prefix + ".output", output});
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionWeights& w,
                            std::size_t heads) {
    if (q_in.dim() == 2 && kv_in.dim() == 2) {
        const Shape qs{1, q_in.size(0), q_in.size(1)};
        const Shape ks{1, kv_in.size(0), kv_in.size(1)};
        Tensor out = multi_head_attention(reshape(q_in, qs), reshape(kv_in, ks), w, heads);
        return reshape(out, q_in.shape());
    }
    const std::size_t width = q_in.shape().back();
    if (width % heads != 0) {
        throw ConfigError("model width " + std::to_string(width) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    }
    Tensor q = matmul(q_in, w.query);
    Tensor k = matmul(kv_in, w.key);
    Tensor v = matmul(kv_in, w.value);
    return matmul(scaled_dot_product_attention(q, k, v, heads), w.output);
}

FfnWeights FfnWeights::init(std::size_t width, std::size_t hidden, std::mt19937_64& rng) {
    return {Linear::init(width, hidden, rng), Linear::init(hidden, width, rng)};
}

void FfnWeights::append_params(const std::string& prefix, ParamList& out) const {
    inner.append_params(prefix + ".inner", out);
    outer.append_params(prefix + ".outer", out);
}

Tensor ffn(const Tensor& x, const FfnWeights& w, const ForwardContext& ctx) {
    return w.outer(ctx.maybe_dropout(gelu(w.inner(x))));
}

}  // namespace cass
