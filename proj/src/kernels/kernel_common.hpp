#pragma once

#include <cstddef>
#include <vector>

namespace cass::kernels::detail {

// dst (cols x rows, row-major) = transpose of src (rows x cols, leading dim ld).
inline void transpose_into(std::vector<double>& dst, const double* src, std::size_t rows,
                           std::size_t cols, std::size_t ld) {
    dst.resize(rows * cols);
    constexpr std::size_t kBlock = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
        const std::size_t r1 = r0 + kBlock < rows ? r0 + kBlock : rows;
        for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
            const std::size_t c1 = c0 + kBlock < cols ? c0 + kBlock : cols;
            for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * ld + c];
            }
        }
    }
}

}  // namespace cass::kernels::detail
