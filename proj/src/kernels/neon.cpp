// AArch64 Advanced SIMD variant. float64x2 lanes; same per-element fma chain
// as the AVX2 kernel.

#include <arm_neon.h>

#include <cmath>

#include "kernel_impl.hpp"

namespace qfvs::kernels {
namespace {

inline void store_pair(real* c, float64x2_t acc, bool accumulate) {
    if (accumulate) acc = vaddq_f64(vld1q_f64(c), acc);
    vst1q_f64(c, acc);
}

inline void block_4x4(const real* a, std::size_t lda, const real* b, std::size_t ldb, real* c,
                      std::size_t ldc, std::size_t k, bool accumulate) {
    float64x2_t acc[4][2];
    for (auto& row : acc) row[0] = row[1] = vdupq_n_f64(0.0);
    for (std::size_t kk = 0; kk < k; ++kk) {
        const float64x2_t b0 = vld1q_f64(b + kk * ldb);
        const float64x2_t b1 = vld1q_f64(b + kk * ldb + 2);
        for (std::size_t r = 0; r < 4; ++r) {
            const float64x2_t av = vdupq_n_f64(a[r * lda + kk]);
            acc[r][0] = vfmaq_f64(acc[r][0], av, b0);
            acc[r][1] = vfmaq_f64(acc[r][1], av, b1);
        }
    }
    for (std::size_t r = 0; r < 4; ++r) {
        store_pair(c + r * ldc, acc[r][0], accumulate);
        store_pair(c + r * ldc + 2, acc[r][1], accumulate);
    }
}

inline void block_1x4(const real* a, const real* b, std::size_t ldb, real* c, std::size_t k,
                      bool accumulate) {
    float64x2_t c0 = vdupq_n_f64(0.0), c1 = vdupq_n_f64(0.0);
    for (std::size_t kk = 0; kk < k; ++kk) {
        const float64x2_t av = vdupq_n_f64(a[kk]);
        c0 = vfmaq_f64(c0, av, vld1q_f64(b + kk * ldb));
        c1 = vfmaq_f64(c1, av, vld1q_f64(b + kk * ldb + 2));
    }
    store_pair(c, c0, accumulate);
    store_pair(c + 2, c1, accumulate);
}

inline void block_1x1(const real* a, const real* b, std::size_t ldb, real* c, std::size_t k,
                      bool accumulate) {
    real acc = 0;
    for (std::size_t kk = 0; kk < k; ++kk) acc = std::fma(a[kk], b[kk * ldb], acc);
    *c = accumulate ? *c + acc : acc;
}

void gemm_neon(const GemmArgs& g) {
    PackedOperands p(g);
    const std::size_t n4 = g.n - g.n % 4;
    std::size_t i = 0;
    for (; i + 4 <= g.m; i += 4) {
        const real* arow = p.a + i * p.lda;
        real* crow = g.c + i * g.ldc;
        for (std::size_t j = 0; j < n4; j += 4)
            block_4x4(arow, p.lda, p.b + j, p.ldb, crow + j, g.ldc, g.k, g.accumulate);
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t j = n4; j < g.n; ++j)
                block_1x1(arow + r * p.lda, p.b + j, p.ldb, crow + r * g.ldc + j, g.k, g.accumulate);
    }
    for (; i < g.m; ++i) {
        const real* arow = p.a + i * p.lda;
        real* crow = g.c + i * g.ldc;
        for (std::size_t j = 0; j < n4; j += 4) block_1x4(arow, p.b + j, p.ldb, crow + j, g.k, g.accumulate);
        for (std::size_t j = n4; j < g.n; ++j) block_1x1(arow, p.b + j, p.ldb, crow + j, g.k, g.accumulate);
    }
}

real dot_neon(const real* x, const real* y, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
    real s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

void axpy_neon(real alpha, const real* x, real* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void add_neon(const real* x, const real* y, real* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_neon(const real* x, const real* y, real* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void relu_neon(const real* x, real* out, std::size_t n) {
    std::size_t i = 0;
    const float64x2_t zero = vdupq_n_f64(0.0);
    for (; i + 2 <= n; i += 2) {
        const float64x2_t v = vld1q_f64(x + i);
        // select v where v > 0, else +0 (NaN compares false)
        vst1q_f64(out + i, vbslq_f64(vcgtq_f64(v, zero), v, zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0 ? x[i] : real{0};
}

}  // namespace

const KernelTable& neon_kernels() {
    static const KernelTable table{"neon", gemm_neon, dot_neon, axpy_neon,
                                   add_neon, mul_neon, relu_neon};
    return table;
}

}  // namespace qfvs::kernels
