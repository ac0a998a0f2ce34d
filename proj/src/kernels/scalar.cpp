#include <algorithm>
#include <vector>

#include "kernel_impl.hpp"

namespace qfvs::kernels {
namespace {

void gemm_scalar(const GemmArgs& g) {
    PackedOperands p(g);
    std::vector<real> acc(g.n);
    for (std::size_t i = 0; i < g.m; ++i) {
        std::fill(acc.begin(), acc.end(), real{0});
        const real* arow = p.a + i * p.lda;
        for (std::size_t kk = 0; kk < g.k; ++kk) {
            const real aik = arow[kk];
            const real* brow = p.b + kk * p.ldb;
            for (std::size_t j = 0; j < g.n; ++j) acc[j] += aik * brow[j];
        }
        real* crow = g.c + i * g.ldc;
        if (g.accumulate) {
            for (std::size_t j = 0; j < g.n; ++j) crow[j] += acc[j];
        } else {
            std::copy(acc.begin(), acc.end(), crow);
        }
    }
}

real dot_scalar(const real* x, const real* y, std::size_t n) {
    real s = 0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy_scalar(real alpha, const real* x, real* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar(const real* x, const real* y, real* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_scalar(const real* x, const real* y, real* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void relu_scalar(const real* x, real* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0 ? x[i] : real{0};
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{"scalar", gemm_scalar, dot_scalar, axpy_scalar,
                                   add_scalar, mul_scalar, relu_scalar};
    return table;
}

}  // namespace qfvs::kernels
