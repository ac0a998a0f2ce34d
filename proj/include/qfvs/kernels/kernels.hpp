#pragma once

// Dense inner loops used by the tensor engine.
//
// Every kernel exists as a portable scalar reference and, where the build
// and the host CPU allow it, a SIMD variant (AVX2+FMA on x86-64, NEON on
// AArch64). The variant is picked once per process; QFVS_KERNELS=scalar
// forces the reference path.
//
// Element-wise contract shared by all gemm variants: each output element is
// accumulated over k in increasing order starting from zero, and the result
// depends only on the row of op(A) and the column of op(B) that produce it,
// never on where that row or column sits inside a block.

#include <cstddef>
#include <string_view>

#include "qfvs/real.hpp"

namespace qfvs::kernels {

enum class Trans { no, yes };

struct GemmArgs {
    Trans trans_a = Trans::no;
    Trans trans_b = Trans::no;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t k = 0;
    const real* a = nullptr;  // op(A) is m x k
    std::size_t lda = 0;
    const real* b = nullptr;  // op(B) is k x n
    std::size_t ldb = 0;
    real* c = nullptr;  // m x n, row-major
    std::size_t ldc = 0;
    bool accumulate = false;  // C += op(A) op(B) instead of C = ...
};

struct KernelTable {
    std::string_view name;
    void (*gemm)(const GemmArgs& args);
    real (*dot)(const real* x, const real* y, std::size_t n);
    // y += alpha * x
    void (*axpy)(real alpha, const real* x, real* y, std::size_t n);
    void (*add)(const real* x, const real* y, real* out, std::size_t n);
    void (*mul)(const real* x, const real* y, real* out, std::size_t n);
    void (*relu)(const real* x, real* out, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table selected for this process.
const KernelTable& active();

}  // namespace qfvs::kernels
