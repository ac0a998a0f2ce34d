#pragma once

#include <vector>

#include "qfvs/kernels/kernels.hpp"

namespace qfvs::kernels {

// Row-major views of op(A) (m x k) and op(B) (k x n). Transposed operands are
// copied into owned buffers so every variant runs the same i-k-j traversal.
struct PackedOperands {
    const real* a;
    std::size_t lda;
    const real* b;
    std::size_t ldb;

    explicit PackedOperands(const GemmArgs& g) {
        if (g.trans_a == Trans::yes) {
            abuf_.resize(g.m * g.k);
            for (std::size_t kk = 0; kk < g.k; ++kk)
                for (std::size_t i = 0; i < g.m; ++i) abuf_[i * g.k + kk] = g.a[kk * g.lda + i];
            a = abuf_.data();
            lda = g.k;
        } else {
            a = g.a;
            lda = g.lda;
        }
        if (g.trans_b == Trans::yes) {
            bbuf_.resize(g.k * g.n);
            for (std::size_t j = 0; j < g.n; ++j)
                for (std::size_t kk = 0; kk < g.k; ++kk) bbuf_[kk * g.n + j] = g.b[j * g.ldb + kk];
            b = bbuf_.data();
            ldb = g.n;
        } else {
            b = g.b;
            ldb = g.ldb;
        }
    }

   private:
    std::vector<real> abuf_;
    std::vector<real> bbuf_;
};

}  // namespace qfvs::kernels
