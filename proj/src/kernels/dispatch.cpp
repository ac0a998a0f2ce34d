#include <cstdlib>
#include <string_view>

#include "qfvs/kernels/kernels.hpp"

namespace qfvs::kernels {

#if defined(QFVS_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif
#if defined(QFVS_HAVE_NEON)
const KernelTable& neon_kernels();
#endif

const KernelTable* avx2_table() {
#if defined(QFVS_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &avx2_kernels() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(QFVS_HAVE_NEON)
    // Advanced SIMD is mandatory on AArch64.
    return &neon_kernels();
#else
    return nullptr;
#endif
}

namespace {

const KernelTable& select() {
    if (const char* env = std::getenv("QFVS_KERNELS")) {
        if (std::string_view(env) == "scalar") return scalar_table();
    }
    if (const KernelTable* t = avx2_table()) return *t;
    if (const KernelTable* t = neon_table()) return *t;
    return scalar_table();
}

}  // namespace

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

}  // namespace qfvs::kernels
