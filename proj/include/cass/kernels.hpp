#pragma once

// Dense double-precision inner loops used by the tensor ops.
//
// Every kernel exists as a portable scalar reference and, where the build
// and the CPU allow it, an AVX2+FMA variant. The active table is chosen once
// at startup (CPUID) and can be forced with CASS_KERNELS=scalar|avx2.
// Variants must agree with the scalar reference to within rounding; the
// element-wise kernels (adam_update) are bitwise identical.

#include <cstddef>
#include <string_view>
#include <vector>

namespace cass::kernels {

struct AdamCoeffs {
    double lr;
    double beta1;
    double beta2;
    double epsilon;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
    std::string_view name;

    // C[m x n] = op(A) * op(B)  (or += when accumulate).
    // op(A) is m x k; A is stored row-major m x k (lda) or, when trans_a, k x m.
    // Per element the k-products are summed in ascending k order.
    void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                 std::size_t ldc, bool accumulate);

    double (*dot)(const double* x, const double* y, std::size_t n);

    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // Row-wise normalisation over the last axis of a rows x d block.
    // xhat and inv_std are saved for the backward pass.
    void (*layer_norm_forward)(const double* x, const double* gain, const double* bias, double* y,
                               double* xhat, double* inv_std, std::size_t rows, std::size_t d,
                               double eps);

    // Accumulates into gx, ggain, gbias (any of which may be null).
    void (*layer_norm_backward)(const double* gy, const double* xhat, const double* inv_std,
                                const double* gain, double* gx, double* ggain, double* gbias,
                                std::size_t rows, std::size_t d);

    void (*adam_update)(double* param, const double* grad, double* m, double* v, std::size_t n,
                        const AdamCoeffs& coeffs);

    // GELU, tanh form: y = x/2 * (1 + tanh(sqrt(2/pi) * (x + 0.044715 x^3))).
    // The tanh values are saved for the backward pass.
    void (*gelu_forward)(const double* x, double* y, double* tanh_out, std::size_t n);
    // gx += gy * dy/dx
    void (*gelu_backward)(const double* x, const double* tanh_in, const double* gy, double* gx,
                          std::size_t n);
};

inline constexpr double kGeluSqrt2OverPi = 0.79788456080286535588;
inline constexpr double kGeluCubic = 0.044715;

const KernelTable& scalar_table();

// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// Every table usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();

const KernelTable& active();

// Selects a table by name; returns false if it is unavailable.
bool set_active(std::string_view name);

}  // namespace cass::kernels
