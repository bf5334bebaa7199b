#include "cass/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cass/errors.hpp"
#include "cass/kernels.hpp"
#include "cass/log.hpp"

namespace cass {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

namespace {

thread_local std::uint64_t t_score_macs = 0;

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   std::function<void(TensorImpl&)> backward) {
    Tensor out = Tensor::from(std::move(shape), std::move(data));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const Tensor& t : inputs) any = any || t.requires_grad();
    if (!any) return out;
    auto node = std::make_shared<detail::Node>();
    for (const Tensor& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward);
    out.impl()->node = std::move(node);
    out.set_requires_grad(true);
    return out;
}

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
    }
}

const kernels::KernelTable& K() { return kernels::active(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (!is_suffix(b.shape(), a.shape())) {
        throw ShapeError("add: cannot broadcast " + shape_to_string(b.shape()) + " onto " +
                         shape_to_string(a.shape()));
    }
    const std::size_t inner = b.numel();
    const std::size_t outer = a.numel() / inner;
    std::vector<double> out(a.values());
    const auto bd = b.data();
    for (std::size_t o = 0; o < outer; ++o) {
        double* row = out.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) row[i] += bd[i];
    }
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, [ai, bi, inner, outer](TensorImpl& y) {
        if (ai->requires_grad) K().axpy(1.0, y.grad.data(), ai->grad_buffer().data(), y.grad.size());
        if (bi->requires_grad) {
            double* gb = bi->grad_buffer().data();
            for (std::size_t o = 0; o < outer; ++o) K().axpy(1.0, y.grad.data() + o * inner, gb, inner);
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.values());
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& y) {
        if (ai->requires_grad) K().axpy(1.0, y.grad.data(), ai->grad_buffer().data(), y.grad.size());
        if (bi->requires_grad) K().axpy(-1.0, y.grad.data(), bi->grad_buffer().data(), y.grad.size());
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl& y) {
        const std::size_t n = y.grad.size();
        if (ai->requires_grad) {
            auto& ga = ai->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) ga[i] += y.grad[i] * bi->data[i];
        }
        if (bi->requires_grad) {
            auto& gb = bi->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) gb[i] += y.grad[i] * ai->data[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (double& v : out) v *= s;
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [ai, s](TensorImpl& y) {
        K().axpy(s, y.grad.data(), ai->grad_buffer().data(), y.grad.size());
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    ImplPtr ai = a.impl();
    return make_result({1}, {s}, {a}, [ai](TensorImpl& y) {
        const double g = y.grad[0];
        for (double& v : ai->grad_buffer()) v += g;
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: " + shape_to_string(a.shape()) + " to " + shape_to_string(shape));
    }
    ImplPtr ai = a.impl();
    return make_result(std::move(shape), a.values(), {a}, [ai](TensorImpl& y) {
        K().axpy(1.0, y.grad.data(), ai->grad_buffer().data(), y.grad.size());
    });
}

Tensor transpose(const Tensor& a) {
    if (a.dim() < 2) throw ShapeError("transpose: needs at least 2 dims, got " + shape_to_string(a.shape()));
    const std::size_t rows = a.shape()[a.dim() - 2];
    const std::size_t cols = a.shape()[a.dim() - 1];
    const std::size_t batch = a.numel() / (rows * cols);
    Shape shape = a.shape();
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    std::vector<double> out(a.numel());
    const auto ad = a.data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* src = ad.data() + b * rows * cols;
        double* dst = out.data() + b * rows * cols;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
    }
    ImplPtr ai = a.impl();
    return make_result(std::move(shape), std::move(out), {a}, [ai, rows, cols, batch](TensorImpl& y) {
        auto& ga = ai->grad_buffer();
        for (std::size_t b = 0; b < batch; ++b) {
            const double* src = y.grad.data() + b * rows * cols;
            double* dst = ga.data() + b * rows * cols;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] += src[c * rows + r];
        }
    });
}

Tensor concat(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::size_t rows = 0;
    std::vector<double> out;
    for (const Tensor& p : parts) {
        if (p.dim() != tail.size() + 1 || !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1)) {
            throw ShapeError("concat: " + shape_to_string(p.shape()) + " vs " +
                             shape_to_string(parts[0].shape()));
        }
        rows += p.shape()[0];
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    Shape shape{rows};
    shape.insert(shape.end(), tail.begin(), tail.end());

    Tensor result = Tensor::from(std::move(shape), std::move(out));
    if (!grad_enabled()) return result;
    auto node = std::make_shared<detail::Node>();
    bool any = false;
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) {
        any = any || p.requires_grad();
        impls.push_back(p.impl());
    }
    if (!any) return result;
    node->inputs = impls;
    node->backward = [impls](TensorImpl& y) {
        std::size_t offset = 0;
        for (const ImplPtr& p : impls) {
            const std::size_t n = p->data.size();
            if (p->requires_grad) K().axpy(1.0, y.grad.data() + offset, p->grad_buffer().data(), n);
            offset += n;
        }
    };
    result.impl()->node = std::move(node);
    result.set_requires_grad(true);
    return result;
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> indices) {
    if (a.dim() < 1 || indices.empty()) throw ShapeError("index_select: empty selection");
    const std::size_t rows = a.shape()[0];
    const std::size_t inner = a.numel() / rows;
    std::vector<double> out;
    out.reserve(indices.size() * inner);
    for (std::size_t idx : indices) {
        if (idx >= rows) throw IndexError("index_select: index " + std::to_string(idx) + " >= " + std::to_string(rows));
        out.insert(out.end(), a.data().begin() + idx * inner, a.data().begin() + (idx + 1) * inner);
    }
    Shape shape = a.shape();
    shape[0] = indices.size();
    ImplPtr ai = a.impl();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return make_result(std::move(shape), std::move(out), {a}, [ai, idx, inner](TensorImpl& y) {
        auto& ga = ai->grad_buffer();
        for (std::size_t r = 0; r < idx.size(); ++r)
            K().axpy(1.0, y.grad.data() + r * inner, ga.data() + idx[r] * inner, inner);
    });
}

Tensor gelu(const Tensor& a) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    auto tanh_vals = std::make_shared<std::vector<double>>(n);
    K().gelu_forward(a.data().data(), out.data(), tanh_vals->data(), n);
    ImplPtr ai = a.impl();
    return make_result(a.shape(), std::move(out), {a}, [ai, tanh_vals](TensorImpl& y) {
        K().gelu_backward(ai->data.data(), tanh_vals->data(), y.grad.data(), ai->grad_buffer().data(),
                          y.grad.size());
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() < 2 || b.dim() != 2 || a.shape().back() != b.shape()[0]) {
        throw ShapeError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
    }
    const std::size_t k = b.shape()[0];
    const std::size_t n = b.shape()[1];
    const std::size_t m = a.numel() / k;
    Shape shape = a.shape();
    shape.back() = n;
    std::vector<double> out(m * n);
    K().gemm(false, false, m, n, k, a.data().data(), k, b.data().data(), n, out.data(), n, false);
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_result(std::move(shape), std::move(out), {a, b}, [ai, bi, m, n, k](TensorImpl& y) {
        if (ai->requires_grad) {
            K().gemm(false, true, m, k, n, y.grad.data(), n, bi->data.data(), n,
                     ai->grad_buffer().data(), k, true);
        }
        if (bi->requires_grad) {
            K().gemm(true, false, k, n, m, ai->data.data(), k, y.grad.data(), n,
                     bi->grad_buffer().data(), n, true);
        }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.dim()) throw ShapeError("softmax: axis out of range for " + shape_to_string(x.shape()));
    const std::size_t len = x.shape()[axis];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.shape()[i];
    const std::size_t outer = x.numel() / (len * inner);
    std::vector<double> out(x.numel());
    const auto xd = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            bool has_nan = false;
            for (std::size_t i = 0; i < len; ++i) {
                const double v = xd[base + i * inner];
                has_nan = has_nan || std::isnan(v);
                mx = std::max(mx, v);
            }
            if (has_nan) {
                for (std::size_t i = 0; i < len; ++i) out[base + i * inner] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            double s = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const double e = std::exp(xd[base + i * inner] - mx);
                out[base + i * inner] = e;
                s += e;
            }
            for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= s;
        }
    }
    ImplPtr xi = x.impl();
    Tensor result = make_result(x.shape(), std::move(out), {x}, nullptr);
    if (result.requires_grad()) {
        // The closure receives the output itself, so it reads y.data without owning it.
        result.impl()->node->backward = [xi, len, inner, outer](TensorImpl& y) {
            auto& gx = xi->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * len * inner + in;
                    double dotp = 0.0;
                    for (std::size_t i = 0; i < len; ++i) dotp += y.grad[base + i * inner] * y.data[base + i * inner];
                    for (std::size_t i = 0; i < len; ++i) {
                        const std::size_t j = base + i * inner;
                        gx[j] += y.data[j] * (y.grad[j] - dotp);
                    }
                }
            }
        };
    }
    return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (gain.dim() != 1 || bias.dim() != 1 || gain.numel() != x.shape().back() ||
        bias.numel() != gain.numel()) {
        throw ShapeError("layer_norm: gain/bias " + shape_to_string(gain.shape()) + "/" +
                         shape_to_string(bias.shape()) + " for input " + shape_to_string(x.shape()));
    }
    const std::size_t d = gain.numel();
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    K().layer_norm_forward(x.data().data(), gain.data().data(), bias.data().data(), out.data(),
                           xhat->data(), inv_std->data(), rows, d, eps);
    ImplPtr xi = x.impl(), gi = gain.impl(), bi = bias.impl();
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [xi, gi, bi, xhat, inv_std, rows, d](TensorImpl& y) {
                           K().layer_norm_backward(
                               y.grad.data(), xhat->data(), inv_std->data(), gi->data.data(),
                               xi->requires_grad ? xi->grad_buffer().data() : nullptr,
                               gi->requires_grad ? gi->grad_buffer().data() : nullptr,
                               bi->requires_grad ? bi->grad_buffer().data() : nullptr, rows, d);
                       });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    const double keep = 1.0 - rate;
    const std::size_t n = x.numel();
    auto mask = std::make_shared<std::vector<double>>(n);
    // One engine draw seeds a splitmix64 stream; each 64-bit word decides two
    // elements by comparing 32-bit halves against keep * 2^32.
    const auto threshold = static_cast<std::uint64_t>(keep * 4294967296.0);
    const double kept = 1.0 / keep;
    std::uint64_t state = rng();
    double* m = mask->data();
    for (std::size_t i = 0; i < n; i += 2) {
        state += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
        m[i] = static_cast<double>((z & 0xFFFFFFFFULL) < threshold) * kept;
        if (i + 1 < n) m[i + 1] = static_cast<double>((z >> 32) < threshold) * kept;
    }
    std::vector<double> out(n);
    const auto xd = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = xd[i] * m[i];
    ImplPtr xi = x.impl();
    return make_result(x.shape(), std::move(out), {x}, [xi, mask](TensorImpl& y) {
        auto& gx = xi->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += y.grad[i] * (*mask)[i];
    });
}

namespace {

struct AttentionDims {
    std::size_t batch, lq, lk, d, heads, dh;
};

AttentionDims check_attention(const Tensor& q, const Tensor& k, std::size_t heads) {
    if (q.dim() != 3 || k.dim() != 3 || q.shape()[0] != k.shape()[0] || q.shape()[2] != k.shape()[2]) {
        throw ShapeError("attention: incompatible q " + shape_to_string(q.shape()) + " and k " +
                         shape_to_string(k.shape()));
    }
    const std::size_t d = q.shape()[2];
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    return {q.shape()[0], q.shape()[1], k.shape()[1], d, heads, d / heads};
}

void softmax_rows_inplace(double* s, std::size_t rows, std::size_t len) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = s + r * len;
        double mx = row[0];
        for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, row[i]);
        double total = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            row[i] = std::exp(row[i] - mx);
            total += row[i];
        }
        const double inv = 1.0 / total;
        for (std::size_t i = 0; i < len; ++i) row[i] *= inv;
    }
}

// probs: [B, heads, Lq, Lk]
void attention_scores(const AttentionDims& dm, const double* q, const double* k, double* probs) {
    const double sc = 1.0 / std::sqrt(static_cast<double>(dm.dh));
    for (std::size_t b = 0; b < dm.batch; ++b) {
        for (std::size_t h = 0; h < dm.heads; ++h) {
            double* p = probs + (b * dm.heads + h) * dm.lq * dm.lk;
            K().gemm(false, true, dm.lq, dm.lk, dm.dh, q + b * dm.lq * dm.d + h * dm.dh, dm.d,
                     k + b * dm.lk * dm.d + h * dm.dh, dm.d, p, dm.lk, false);
            for (std::size_t i = 0; i < dm.lq * dm.lk; ++i) p[i] *= sc;
            softmax_rows_inplace(p, dm.lq, dm.lk);
        }
    }
    t_score_macs += static_cast<std::uint64_t>(dm.batch) * dm.lq * dm.lk * dm.d;
}

}  // namespace

Tensor attention_probabilities(const Tensor& q, const Tensor& k, std::size_t heads) {
    const AttentionDims dm = check_attention(q, k, heads);
    std::vector<double> probs(dm.batch * dm.heads * dm.lq * dm.lk);
    attention_scores(dm, q.data().data(), k.data().data(), probs.data());
    return Tensor::from({dm.batch, dm.heads, dm.lq, dm.lk}, std::move(probs));
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    std::size_t heads) {
    const AttentionDims dm = check_attention(q, k, heads);
    if (v.shape() != k.shape()) {
        throw ShapeError("attention: v " + shape_to_string(v.shape()) + " must match k " +
                         shape_to_string(k.shape()));
    }
    auto probs = std::make_shared<std::vector<double>>(dm.batch * dm.heads * dm.lq * dm.lk);
    attention_scores(dm, q.data().data(), k.data().data(), probs->data());
    std::vector<double> out(dm.batch * dm.lq * dm.d);
    for (std::size_t b = 0; b < dm.batch; ++b) {
        for (std::size_t h = 0; h < dm.heads; ++h) {
            const double* p = probs->data() + (b * dm.heads + h) * dm.lq * dm.lk;
            K().gemm(false, false, dm.lq, dm.dh, dm.lk, p, dm.lk,
                     v.data().data() + b * dm.lk * dm.d + h * dm.dh, dm.d,
                     out.data() + b * dm.lq * dm.d + h * dm.dh, dm.d, false);
        }
    }
    ImplPtr qi = q.impl(), ki = k.impl(), vi = v.impl();
    return make_result(q.shape(), std::move(out), {q, k, v}, [qi, ki, vi, probs, dm](TensorImpl& y) {
        const double sc = 1.0 / std::sqrt(static_cast<double>(dm.dh));
        std::vector<double> dp(dm.lq * dm.lk);
        double* gq = qi->requires_grad ? qi->grad_buffer().data() : nullptr;
        double* gk = ki->requires_grad ? ki->grad_buffer().data() : nullptr;
        double* gv = vi->requires_grad ? vi->grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < dm.batch; ++b) {
            for (std::size_t h = 0; h < dm.heads; ++h) {
                const double* p = probs->data() + (b * dm.heads + h) * dm.lq * dm.lk;
                const double* go = y.grad.data() + b * dm.lq * dm.d + h * dm.dh;
                const std::size_t kv_off = b * dm.lk * dm.d + h * dm.dh;
                const std::size_t q_off = b * dm.lq * dm.d + h * dm.dh;
                if (gv) K().gemm(true, false, dm.lk, dm.dh, dm.lq, p, dm.lk, go, dm.d, gv + kv_off, dm.d, true);
                if (!gq && !gk) continue;
                K().gemm(false, true, dm.lq, dm.lk, dm.dh, go, dm.d, vi->data.data() + kv_off, dm.d,
                         dp.data(), dm.lk, false);
                for (std::size_t r = 0; r < dm.lq; ++r) {
                    const double* pr = p + r * dm.lk;
                    double* dr = dp.data() + r * dm.lk;
                    double dotp = 0.0;
                    for (std::size_t i = 0; i < dm.lk; ++i) dotp += pr[i] * dr[i];
                    for (std::size_t i = 0; i < dm.lk; ++i) dr[i] = pr[i] * (dr[i] - dotp) * sc;
                }
                if (gq) K().gemm(false, false, dm.lq, dm.dh, dm.lk, dp.data(), dm.lk,
                                 ki->data.data() + kv_off, dm.d, gq + q_off, dm.d, true);
                if (gk) K().gemm(true, false, dm.lk, dm.dh, dm.lq, dp.data(), dm.lk,
                                 qi->data.data() + q_off, dm.d, gk + kv_off, dm.d, true);
            }
        }
    });
}

std::uint64_t attention_score_macs() { return t_score_macs; }
void reset_attention_score_macs() { t_score_macs = 0; }

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, Reduction reduction) {
    if (logits.dim() != 2 || logits.shape()[0] != labels.size()) {
        throw ShapeError("cross_entropy: logits " + shape_to_string(logits.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = logits.shape()[0];
    const std::size_t k = logits.shape()[1];
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= k) {
            throw IndexError("cross_entropy: label " + std::to_string(l) + " outside [0," + std::to_string(k) + ")");
        }
    }
    auto probs = std::make_shared<std::vector<double>>(logits.values());
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double* row = probs->data() + r * k;
        double mx = row[0];
        for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += std::exp(row[i] - mx);
        const double lse = mx + std::log(s);
        total += lse - row[labels[r]];
        for (std::size_t i = 0; i < k; ++i) row[i] = std::exp(row[i] - lse);
    }
    const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
    ImplPtr li = logits.impl();
    std::vector<int> lab(labels.begin(), labels.end());
    return make_result({1}, {total * norm}, {logits}, [li, probs, lab, n, k, norm](TensorImpl& y) {
        const double g = y.grad[0] * norm;
        auto& gl = li->grad_buffer();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < k; ++i) gl[r * k + i] += g * (*probs)[r * k + i];
            gl[r * k + lab[r]] -= g;
        }
    });
}

Tensor squared_error_sum(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "squared_error_sum");
    double s = 0.0;
    const auto p = pred.data();
    const auto t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
    ImplPtr pi = pred.impl(), ti = target.impl();
    return make_result({1}, {s}, {pred, target}, [pi, ti](TensorImpl& y) {
        const double g = y.grad[0];
        const std::size_t n = pi->data.size();
        if (pi->requires_grad) {
            auto& gp = pi->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) gp[i] += 2.0 * g * (pi->data[i] - ti->data[i]);
        }
        if (ti->requires_grad) {
            auto& gt = ti->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) gt[i] -= 2.0 * g * (pi->data[i] - ti->data[i]);
        }
    });
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
    require_same_shape(u, v, "cosine_similarity");
    const std::size_t n = u.numel();
    const double uv = K().dot(u.data().data(), v.data().data(), n);
    const double nu = std::sqrt(K().dot(u.data().data(), u.data().data(), n));
    const double nv = std::sqrt(K().dot(v.data().data(), v.data().data(), n));
    if (nu == 0.0 || nv == 0.0) {
        log::warn("cosine_similarity: zero vector, similarity defined as 0");
        return make_result({1}, {0.0}, {u, v}, [](TensorImpl&) {});
    }
    const double s = uv / (nu * nv);
    ImplPtr ui = u.impl(), vi = v.impl();
    return make_result({1}, {s}, {u, v}, [ui, vi, s, nu, nv, n](TensorImpl& y) {
        const double g = y.grad[0];
        if (ui->requires_grad) {
            auto& gu = ui->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                gu[i] += g * (vi->data[i] / (nu * nv) - s * ui->data[i] / (nu * nu));
        }
        if (vi->requires_grad) {
            auto& gv = vi->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                gv[i] += g * (ui->data[i] / (nu * nv) - s * vi->data[i] / (nv * nv));
        }
    });
}

Tensor l2_normalize_rows(const Tensor& x) {
    if (x.dim() != 2) throw ShapeError("l2_normalize_rows: expects [n, d], got " + shape_to_string(x.shape()));
    const std::size_t rows = x.shape()[0];
    const std::size_t d = x.shape()[1];
    auto norms = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x.numel(), 0.0);
    bool warned = false;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        const double nr = std::sqrt(K().dot(xr, xr, d));
        (*norms)[r] = nr;
        if (nr == 0.0) {
            if (!warned) log::warn("l2_normalize_rows: zero row left as zero");
            warned = true;
            continue;
        }
        for (std::size_t i = 0; i < d; ++i) out[r * d + i] = xr[i] / nr;
    }
    ImplPtr xi = x.impl();
    Tensor result = make_result(x.shape(), std::move(out), {x}, nullptr);
    if (result.requires_grad()) {
        result.impl()->node->backward = [xi, norms, rows, d](TensorImpl& y) {
            auto& gx = xi->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const double nr = (*norms)[r];
                if (nr == 0.0) continue;
                const double* yr = y.data.data() + r * d;
                const double* gr = y.grad.data() + r * d;
                const double dotp = K().dot(gr, yr, d);
                for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += (gr[i] - yr[i] * dotp) / nr;
            }
        };
    }
    return result;
}

Tensor info_nce(const Tensor& sim, std::span<const ContrastiveGroup> groups, double tau) {
    if (!(tau > 0.0)) throw ConfigError("contrastive temperature must be > 0");
    if (sim.dim() != 2 || sim.shape()[0] != sim.shape()[1] || sim.shape()[0] < 2) {
        throw ShapeError("info_nce: similarity must be square [N,N] with N>=2, got " +
                         shape_to_string(sim.shape()));
    }
    if (groups.empty()) throw ShapeError("info_nce: no anchors");
    const std::size_t n = sim.shape()[0];
    const auto s = sim.data();
    // Per anchor: softmax over m != anchor of sim/tau.
    auto soft = std::make_shared<std::vector<double>>(groups.size() * n, 0.0);
    double total = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const ContrastiveGroup& grp = groups[g];
        if (grp.anchor >= n) throw IndexError("info_nce: anchor out of range");
        const double* row = s.data() + grp.anchor * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < n; ++m)
            if (m != grp.anchor) mx = std::max(mx, row[m] / tau);
        double z = 0.0;
        for (std::size_t m = 0; m < n; ++m)
            if (m != grp.anchor) z += std::exp(row[m] / tau - mx);
        const double lse = mx + std::log(z);
        double* sr = soft->data() + g * n;
        for (std::size_t m = 0; m < n; ++m)
            if (m != grp.anchor) sr[m] = std::exp(row[m] / tau - lse);
        for (std::size_t p : grp.positives) {
            if (p >= n || p == grp.anchor) throw IndexError("info_nce: invalid positive index");
            total += lse - row[p] / tau;
        }
    }
    const double inv_groups = 1.0 / static_cast<double>(groups.size());
    ImplPtr si = sim.impl();
    std::vector<ContrastiveGroup> grps(groups.begin(), groups.end());
    return make_result({1}, {total * inv_groups}, {sim}, [si, soft, grps, n, tau, inv_groups](TensorImpl& y) {
        const double g = y.grad[0] * inv_groups / tau;
        auto& gs = si->grad_buffer();
        for (std::size_t gi = 0; gi < grps.size(); ++gi) {
            const auto& grp = grps[gi];
            const double count = static_cast<double>(grp.positives.size());
            double* grow = gs.data() + grp.anchor * n;
            const double* sr = soft->data() + gi * n;
            for (std::size_t m = 0; m < n; ++m) grow[m] += g * count * sr[m];
            for (std::size_t p : grp.positives) grow[p] -= g;
        }
    });
}

}  // namespace cass
