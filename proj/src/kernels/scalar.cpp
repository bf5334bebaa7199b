#include <cmath>
#include <vector>

#include "cass/kernels.hpp"
#include "kernel_common.hpp"

namespace cass::kernels {
namespace {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        const double* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
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
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void layer_norm_forward(const double* x, const double* gain, const double* bias, double* y,
                        double* xhat, double* inv_std, std::size_t rows, std::size_t d,
                        double eps) {
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * d;
        double sum = 0.0;
        for (std::size_t i = 0; i < d; ++i) sum += xr[i];
        const double mean = sum * inv_d;
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double c = xr[i] - mean;
            sq += c * c;
        }
        const double is = 1.0 / std::sqrt(sq * inv_d + eps);
        inv_std[r] = is;
        double* hr = xhat + r * d;
        double* yr = y + r * d;
        for (std::size_t i = 0; i < d; ++i) {
            hr[i] = (xr[i] - mean) * is;
            yr[i] = hr[i] * gain[i] + bias[i];
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
            for (std::size_t i = 0; i < d; ++i) ggain[i] += gyr[i] * hr[i];
        }
        if (gbias) {
            for (std::size_t i = 0; i < d; ++i) gbias[i] += gyr[i];
        }
        if (!gx) continue;
        double mean_g = 0.0;
        double mean_gh = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double g = gyr[i] * gain[i];
            mean_g += g;
            mean_gh += g * hr[i];
        }
        mean_g *= inv_d;
        mean_gh *= inv_d;
        double* gxr = gx + r * d;
        for (std::size_t i = 0; i < d; ++i) {
            const double g = gyr[i] * gain[i];
            gxr[i] += inv_std[r] * (g - mean_g - hr[i] * mean_gh);
        }
    }
}

void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoeffs& c) {
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + one_minus_b1 * g;
        v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
        const double m_hat = m[i] / c.bias_correction1;
        const double v_hat = v[i] / c.bias_correction2;
        param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

void gelu_forward(const double* x, double* y, double* tanh_out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        const double t = std::tanh(kGeluSqrt2OverPi * (v + kGeluCubic * v * v * v));
        tanh_out[i] = t;
        y[i] = 0.5 * v * (1.0 + t);
    }
}

void gelu_backward(const double* x, const double* tanh_in, const double* gy, double* gx,
                   std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        const double t = tanh_in[i];
        const double du = kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
        gx[i] += gy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{
        "scalar",     gemm,          dot,          axpy,         layer_norm_forward,
        layer_norm_backward, adam_update, gelu_forward, gelu_backward,
    };
    return table;
}

}  // namespace cass::kernels
