#pragma once

// Differentiable tensor operations. Unless noted, ops accept arbitrary leading
// (batch) dimensions and act on the trailing ones.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cass/tensor.hpp"

namespace cass {

// ---- elementwise / structural -------------------------------------------

// b's shape must equal a's shape or be a suffix of it (bias / positional broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);
// Concatenates along axis 0; trailing shapes must agree.
Tensor concat(std::span<const Tensor> parts);
// Selects entries of axis 0.
Tensor index_select(const Tensor& a, std::span<const std::size_t> indices);

Tensor gelu(const Tensor& a);

// ---- linear algebra --------------------------------------------------------

// a: [..., m, k], b: [k, n] -> [..., m, n]
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- normalisation / probabilities ----------------------------------------

// Numerically stable softmax along `axis`. NaN inputs propagate to NaN outputs.
Tensor softmax(const Tensor& x, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-9;

// Normalises over the last axis, then applies gain and bias (both [D]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

// ---- attention ------------------------------------------------------------

// Per-head scaled dot-product attention on already-projected inputs.
// q: [B, Lq, D], k and v: [B, Lk, D]; D % heads == 0; scale 1/sqrt(D/heads).
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    std::size_t heads);

// Attention probabilities [B, heads, Lq, Lk] (no graph).
Tensor attention_probabilities(const Tensor& q, const Tensor& k, std::size_t heads);

// Multiply-accumulates spent on query-key scores on this thread since the last reset.
std::uint64_t attention_score_macs();
void reset_attention_score_macs();

// ---- losses -----------------------------------------------------------------

enum class Reduction { Mean, Sum };

// logits: [n, k]; labels in [0, k).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels,
                     Reduction reduction = Reduction::Mean);

// Sum of squared differences; shapes must match.
Tensor squared_error_sum(const Tensor& pred, const Tensor& target);

// u, v: same shape. Returns 0 (and warns once) if either vector is zero.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);

// Row-wise L2 normalisation of [n, d]; zero rows stay zero.
Tensor l2_normalize_rows(const Tensor& x);

// Temperature-scaled contrastive loss on a similarity matrix sim: [N, N].
// For anchor a and each of its positives p the term is
//   -log( exp(sim[a,p]/tau) / sum_{m != a} exp(sim[a,m]/tau) ),
// summed over positives and averaged over anchors.
struct ContrastiveGroup {
    std::size_t anchor;
    std::vector<std::size_t> positives;
};
Tensor info_nce(const Tensor& sim, std::span<const ContrastiveGroup> groups, double tau);

}  // namespace cass
