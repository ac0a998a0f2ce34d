// Built with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "kernel_impl.hpp"

namespace qfvs::kernels {
namespace {

inline void store_row(real* c, __m256d acc, bool accumulate) {
    if (accumulate) acc = _mm256_add_pd(_mm256_loadu_pd(c), acc);
    _mm256_storeu_pd(c, acc);
}

// 4 rows x 8 columns, full k sweep.
inline void block_4x8(const real* a, std::size_t lda, const real* b, std::size_t ldb, real* c,
                      std::size_t ldc, std::size_t k, bool accumulate) {
    __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
    __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
    __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
    __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
    for (std::size_t kk = 0; kk < k; ++kk) {
        const real* brow = b + kk * ldb;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        __m256d a0 = _mm256_broadcast_sd(a + kk);
        c00 = _mm256_fmadd_pd(a0, b0, c00);
        c01 = _mm256_fmadd_pd(a0, b1, c01);
        a0 = _mm256_broadcast_sd(a + lda + kk);
        c10 = _mm256_fmadd_pd(a0, b0, c10);
        c11 = _mm256_fmadd_pd(a0, b1, c11);
        a0 = _mm256_broadcast_sd(a + 2 * lda + kk);
        c20 = _mm256_fmadd_pd(a0, b0, c20);
        c21 = _mm256_fmadd_pd(a0, b1, c21);
        a0 = _mm256_broadcast_sd(a + 3 * lda + kk);
        c30 = _mm256_fmadd_pd(a0, b0, c30);
        c31 = _mm256_fmadd_pd(a0, b1, c31);
    }
    store_row(c, c00, accumulate);
    store_row(c + 4, c01, accumulate);
    store_row(c + ldc, c10, accumulate);
    store_row(c + ldc + 4, c11, accumulate);
    store_row(c + 2 * ldc, c20, accumulate);
    store_row(c + 2 * ldc + 4, c21, accumulate);
    store_row(c + 3 * ldc, c30, accumulate);
    store_row(c + 3 * ldc + 4, c31, accumulate);
}

inline void block_1x8(const real* a, const real* b, std::size_t ldb, real* c, std::size_t k,
                      bool accumulate) {
    __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
    for (std::size_t kk = 0; kk < k; ++kk) {
        const real* brow = b + kk * ldb;
        const __m256d a0 = _mm256_broadcast_sd(a + kk);
        c0 = _mm256_fmadd_pd(a0, _mm256_loadu_pd(brow), c0);
        c1 = _mm256_fmadd_pd(a0, _mm256_loadu_pd(brow + 4), c1);
    }
    store_row(c, c0, accumulate);
    store_row(c + 4, c1, accumulate);
}

inline void block_1x4(const real* a, const real* b, std::size_t ldb, real* c, std::size_t k,
                      bool accumulate) {
    __m256d c0 = _mm256_setzero_pd();
    for (std::size_t kk = 0; kk < k; ++kk)
        c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + kk), _mm256_loadu_pd(b + kk * ldb), c0);
    store_row(c, c0, accumulate);
}

inline void block_1x1(const real* a, const real* b, std::size_t ldb, real* c, std::size_t k,
                      bool accumulate) {
    real acc = 0;
    for (std::size_t kk = 0; kk < k; ++kk) acc = std::fma(a[kk], b[kk * ldb], acc);
    *c = accumulate ? *c + acc : acc;
}

void gemm_avx2(const GemmArgs& g) {
    PackedOperands p(g);
    const std::size_t n8 = g.n - g.n % 8;
    std::size_t i = 0;
    for (; i + 4 <= g.m; i += 4) {
        const real* arow = p.a + i * p.lda;
        real* crow = g.c + i * g.ldc;
        for (std::size_t j = 0; j < n8; j += 8)
            block_4x8(arow, p.lda, p.b + j, p.ldb, crow + j, g.ldc, g.k, g.accumulate);
        for (std::size_t r = 0; r < 4; ++r) {
            std::size_t j = n8;
            if (j + 4 <= g.n) {
                block_1x4(arow + r * p.lda, p.b + j, p.ldb, crow + r * g.ldc + j, g.k, g.accumulate);
                j += 4;
            }
            for (; j < g.n; ++j)
                block_1x1(arow + r * p.lda, p.b + j, p.ldb, crow + r * g.ldc + j, g.k, g.accumulate);
        }
    }
    for (; i < g.m; ++i) {
        const real* arow = p.a + i * p.lda;
        real* crow = g.c + i * g.ldc;
        std::size_t j = 0;
        for (; j < n8; j += 8) block_1x8(arow, p.b + j, p.ldb, crow + j, g.k, g.accumulate);
        if (j + 4 <= g.n) {
            block_1x4(arow, p.b + j, p.ldb, crow + j, g.k, g.accumulate);
            j += 4;
        }
        for (; j < g.n; ++j) block_1x1(arow, p.b + j, p.ldb, crow + j, g.k, g.accumulate);
    }
}

real dot_avx2(const real* x, const real* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    alignas(32) real lanes[4];
    _mm256_store_pd(lanes, acc);
    real s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

void axpy_avx2(real alpha, const real* x, real* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void add_avx2(const real* x, const real* y, real* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_avx2(const real* x, const real* y, real* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void relu_avx2(const real* x, real* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    // max_pd(x, 0) returns the second operand for NaN and for -0.0, matching
    // the scalar `x > 0 ? x : 0`.
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    for (; i < n; ++i) out[i] = x[i] > 0 ? x[i] : real{0};
}

}  // namespace

const KernelTable& avx2_kernels() {
    static const KernelTable table{"avx2", gemm_avx2, dot_avx2, axpy_avx2,
                                   add_avx2, mul_avx2, relu_avx2};
    return table;
}

}  // namespace qfvs::kernels
