// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// is only ever entered after a CPUID check in dispatch.cpp.

#include "cass/kernels.hpp"

#if defined(CASS_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>
#include <vector>

#include "kernel_common.hpp"

namespace cass::kernels {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// R rows x (4*NV) columns register tile, k summed in ascending order.
template <int R, int NV>
inline void micro_tile(std::size_t k, const double* a, std::size_t lda, const double* b,
                       std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    __m256d acc[R][NV];
#pragma GCC unroll 8
    for (int r = 0; r < R; ++r) {
#pragma GCC unroll 2
        for (int v = 0; v < NV; ++v) {
            acc[r][v] = accumulate ? _mm256_loadu_pd(c + r * ldc + 4 * v) : _mm256_setzero_pd();
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        __m256d bv[NV];
#pragma GCC unroll 2
        for (int v = 0; v < NV; ++v) bv[v] = _mm256_loadu_pd(b + p * ldb + 4 * v);
#pragma GCC unroll 8
        for (int r = 0; r < R; ++r) {
            const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
#pragma GCC unroll 2
            for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_pd(av, bv[v], acc[r][v]);
        }
    }
#pragma GCC unroll 8
    for (int r = 0; r < R; ++r) {
#pragma GCC unroll 2
        for (int v = 0; v < NV; ++v) _mm256_storeu_pd(c + r * ldc + 4 * v, acc[r][v]);
    }
}

template <int R>
void row_block(std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) micro_tile<R, 2>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    for (; j + 4 <= n; j += 4) micro_tile<R, 1>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    for (; j < n; ++j) {
        for (int r = 0; r < R; ++r) {
            double s = accumulate ? c[r * ldc + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s = std::fma(a[r * lda + p], b[p * ldb + j], s);
            c[r * ldc + j] = s;
        }
    }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    std::size_t i = 0;
    for (; i + 6 <= m; i += 6)
        row_block<6>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
    switch (m - i) {
        case 5: row_block<5>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate); break;
        case 4: row_block<4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate); break;
        case 3: row_block<3>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate); break;
        case 2: row_block<2>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate); break;
        case 1: row_block<1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate); break;
        default: break;
    }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
          bool accumulate) {
    thread_local std::vector<double> pack_a, pack_b;
    if (trans_a) {
        detail::transpose_into(pack_a, a, k, m, lda);
        a = pack_a.data();
        lda = k;
    }
    if (trans_b) {
        detail::transpose_into(pack_b, b, n, k, ldb);
        b = pack_b.data();
        ldb = n;
    }
    gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

double dot(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

double row_sum(const double* x, std::size_t d) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= d; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < d; ++i) s += x[i];
    return s;
}

void layer_norm_forward(const double* x, const double* gain, const double* bias, double* y,
                        double* xhat, double* inv_std, std::size_t rows, std::size_t d,
                        double eps) {
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * d;
        const double mean = row_sum(xr, d) * inv_d;
        const __m256d vmean = _mm256_set1_pd(mean);
        __m256d acc = _mm256_setzero_pd();
        std::size_t i = 0;
        for (; i + 4 <= d; i += 4) {
            const __m256d cv = _mm256_sub_pd(_mm256_loadu_pd(xr + i), vmean);
            acc = _mm256_fmadd_pd(cv, cv, acc);
        }
        double sq = hsum(acc);
        for (; i < d; ++i) {
            const double cv = xr[i] - mean;
            sq = std::fma(cv, cv, sq);
        }
        const double is = 1.0 / std::sqrt(sq * inv_d + eps);
        inv_std[r] = is;
        const __m256d vis = _mm256_set1_pd(is);
        double* hr = xhat + r * d;
        double* yr = y + r * d;
        i = 0;
        for (; i + 4 <= d; i += 4) {
            const __m256d h = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(xr + i), vmean), vis);
            _mm256_storeu_pd(hr + i, h);
            _mm256_storeu_pd(yr + i,
                             _mm256_fmadd_pd(h, _mm256_loadu_pd(gain + i), _mm256_loadu_pd(bias + i)));
        }
        for (; i < d; ++i) {
            hr[i] = (xr[i] - mean) * is;
            yr[i] = std::fma(hr[i], gain[i], bias[i]);
        }
    }
}

void layer_norm_backward(const double* gy, const double* xhat, const double* inv_std,
                         const double* gain, double* gx, double* ggain, double* gbias,
                         std::size_t rows, std::size_t d) {
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* gyr = gy + r * d;
        const double* hr = xhat + r * d;
        if (ggain) {
            std::size_t i = 0;
            for (; i + 4 <= d; i += 4) {
                const __m256d upd = _mm256_fmadd_pd(_mm256_loadu_pd(gyr + i), _mm256_loadu_pd(hr + i),
                                                    _mm256_loadu_pd(ggain + i));
                _mm256_storeu_pd(ggain + i, upd);
            }
            for (; i < d; ++i) ggain[i] = std::fma(gyr[i], hr[i], ggain[i]);
        }
        if (gbias) {
            std::size_t i = 0;
            for (; i + 4 <= d; i += 4)
                _mm256_storeu_pd(gbias + i,
                                 _mm256_add_pd(_mm256_loadu_pd(gbias + i), _mm256_loadu_pd(gyr + i)));
            for (; i < d; ++i) gbias[i] += gyr[i];
        }
        if (!gx) continue;
        __m256d sg = _mm256_setzero_pd();
        __m256d sgh = _mm256_setzero_pd();
        std::size_t i = 0;
        for (; i + 4 <= d; i += 4) {
            const __m256d g = _mm256_mul_pd(_mm256_loadu_pd(gyr + i), _mm256_loadu_pd(gain + i));
            sg = _mm256_add_pd(sg, g);
            sgh = _mm256_fmadd_pd(g, _mm256_loadu_pd(hr + i), sgh);
        }
        double mean_g = hsum(sg);
        double mean_gh = hsum(sgh);
        for (; i < d; ++i) {
            const double g = gyr[i] * gain[i];
            mean_g += g;
            mean_gh = std::fma(g, hr[i], mean_gh);
        }
        mean_g *= inv_d;
        mean_gh *= inv_d;
        const __m256d vmg = _mm256_set1_pd(mean_g);
        const __m256d vmgh = _mm256_set1_pd(mean_gh);
        const __m256d vis = _mm256_set1_pd(inv_std[r]);
        double* gxr = gx + r * d;
        i = 0;
        for (; i + 4 <= d; i += 4) {
            const __m256d g = _mm256_mul_pd(_mm256_loadu_pd(gyr + i), _mm256_loadu_pd(gain + i));
            const __m256d t =
                _mm256_sub_pd(_mm256_sub_pd(g, vmg), _mm256_mul_pd(_mm256_loadu_pd(hr + i), vmgh));
            _mm256_storeu_pd(gxr + i, _mm256_fmadd_pd(vis, t, _mm256_loadu_pd(gxr + i)));
        }
        for (; i < d; ++i) {
            const double g = gyr[i] * gain[i];
            gxr[i] = std::fma(inv_std[r], g - mean_g - hr[i] * mean_gh, gxr[i]);
        }
    }
}

// No FMA here: each step rounds exactly like the scalar reference, so the two
// variants produce bitwise-identical parameters.
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoeffs& c) {
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    const __m256d b1 = _mm256_set1_pd(c.beta1);
    const __m256d b2 = _mm256_set1_pd(c.beta2);
    const __m256d omb1 = _mm256_set1_pd(one_minus_b1);
    const __m256d omb2 = _mm256_set1_pd(one_minus_b2);
    const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
    const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
    const __m256d lr = _mm256_set1_pd(c.lr);
    const __m256d eps = _mm256_set1_pd(c.epsilon);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mv =
            _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
        const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d m_hat = _mm256_div_pd(mv, bc1);
        const __m256d v_hat = _mm256_div_pd(vv, bc2);
        const __m256d step =
            _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    for (; i < n; ++i) {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + one_minus_b1 * g;
        v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
        const double m_hat = m[i] / c.bias_correction1;
        const double v_hat = v[i] / c.bias_correction2;
        param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

// exp(x) for |x| <= 708: x = n ln2 + r, |r| <= ln2/2, degree-12 Taylor on r,
// scaled by 2^n through the exponent field. Relative error ~1e-16.
inline __m256d exp_pd(__m256d x) {
    x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-708.0)), _mm256_set1_pd(708.0));
    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634074)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
    r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);
    static constexpr double kInvFact[] = {
        1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0, 1.0 / 40320.0,
        1.0 / 5040.0,      1.0 / 720.0,      1.0 / 120.0,     1.0 / 24.0,     1.0 / 6.0,
        0.5,               1.0,              1.0,
    };
    __m256d p = _mm256_set1_pd(kInvFact[0]);
    for (int i = 1; i < 13; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[i]));
    // n + 2^52 + 2^51 puts the integer in the low mantissa bits.
    const __m256d magic = _mm256_set1_pd(6755399441055744.0);
    const __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)),
                                        _mm256_castpd_si256(magic));
    const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
    return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

inline double gelu_tanh_scalar(double v) { return std::tanh(kGeluSqrt2OverPi * (v + kGeluCubic * v * v * v)); }

void gelu_forward(const double* x, double* y, double* tanh_out, std::size_t n) {
    const __m256d k0 = _mm256_set1_pd(kGeluSqrt2OverPi);
    const __m256d k1 = _mm256_set1_pd(kGeluCubic);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d two = _mm256_set1_pd(2.0);
    const __m256d half = _mm256_set1_pd(0.5);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d u = _mm256_mul_pd(k0, _mm256_fmadd_pd(_mm256_mul_pd(k1, v), _mm256_mul_pd(v, v), v));
        // tanh(u) = 1 - 2 / (exp(2u) + 1)
        const __m256d e = exp_pd(_mm256_mul_pd(two, u));
        const __m256d t = _mm256_sub_pd(one, _mm256_div_pd(two, _mm256_add_pd(e, one)));
        _mm256_storeu_pd(tanh_out + i, t);
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_mul_pd(half, v), _mm256_add_pd(one, t)));
    }
    for (; i < n; ++i) {
        const double t = gelu_tanh_scalar(x[i]);
        tanh_out[i] = t;
        y[i] = 0.5 * x[i] * (1.0 + t);
    }
}

void gelu_backward(const double* x, const double* tanh_in, const double* gy, double* gx,
                   std::size_t n) {
    const __m256d k0 = _mm256_set1_pd(kGeluSqrt2OverPi);
    const __m256d k13 = _mm256_set1_pd(3.0 * kGeluCubic);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d half = _mm256_set1_pd(0.5);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d t = _mm256_loadu_pd(tanh_in + i);
        const __m256d du = _mm256_mul_pd(k0, _mm256_fmadd_pd(k13, _mm256_mul_pd(v, v), one));
        const __m256d sech2 = _mm256_fnmadd_pd(t, t, one);
        const __m256d d = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_mul_pd(half, v), sech2), du,
                                          _mm256_mul_pd(half, _mm256_add_pd(one, t)));
        _mm256_storeu_pd(gx + i, _mm256_fmadd_pd(_mm256_loadu_pd(gy + i), d, _mm256_loadu_pd(gx + i)));
    }
    for (; i < n; ++i) {
        const double v = x[i];
        const double t = tanh_in[i];
        const double du = kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
        gx[i] += gy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
}

}  // namespace

const KernelTable* avx2_table_impl() {
    static const KernelTable table{
        "avx2",     gemm,          dot,          axpy,         layer_norm_forward,
        layer_norm_backward, adam_update, gelu_forward, gelu_backward,
    };
    return &table;
}

}  // namespace cass::kernels

#else

namespace cass::kernels {
const KernelTable* avx2_table_impl() { return nullptr; }
}  // namespace cass::kernels

#endif
