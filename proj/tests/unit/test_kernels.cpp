#include <doctest.h>

#include <cmath>
#include <vector>

#include "qfvs/kernels/kernels.hpp"
#include "qfvs/rng.hpp"

using namespace qfvs;
using namespace qfvs::kernels;

namespace {

std::vector<const KernelTable*> simd_tables() {
    std::vector<const KernelTable*> out;
    if (auto t = avx2_table()) out.push_back(t);
    if (auto t = neon_table()) out.push_back(t);
    return out;
}

std::vector<real> random_vec(std::size_t n, Rng& rng) {
    std::vector<real> v(n);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return v;
}

void check_close(const std::vector<real>& a, const std::vector<real>& b, real rel) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= rel * (1 + std::abs(b[i])));
}

// Textbook triple loop, independent of every table.
std::vector<real> naive_gemm(const GemmArgs& g) {
    std::vector<real> c(g.m * g.n, 0);
    for (std::size_t i = 0; i < g.m; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            real s = g.accumulate ? g.c[i * g.ldc + j] : 0;
            for (std::size_t p = 0; p < g.k; ++p) {
                const real a = g.trans_a == Trans::no ? g.a[i * g.lda + p] : g.a[p * g.lda + i];
                const real b = g.trans_b == Trans::no ? g.b[p * g.ldb + j] : g.b[j * g.ldb + p];
                s += a * b;
            }
            c[i * g.n + j] = s;
        }
    return c;
}

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("active table is one of the built variants") {
        const auto name = active().name;
        CHECK((name == scalar_table().name || (avx2_table() && name == avx2_table()->name) ||
               (neon_table() && name == neon_table()->name)));
    }

    TEST_CASE("scalar gemm matches a naive triple loop for every layout") {
        Rng rng(3);
        for (auto ta : {Trans::no, Trans::yes})
            for (auto tb : {Trans::no, Trans::yes})
                for (bool acc : {false, true})
                    for (std::size_t m : {1, 5, 9})
                        for (std::size_t n : {1, 7, 17})
                            for (std::size_t k : {1, 3, 13}) {
                                auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), c = random_vec(m * n, rng);
                                GemmArgs g{ta, tb, m, n, k, a.data(), ta == Trans::no ? k : m,
                                           b.data(), tb == Trans::no ? n : k, c.data(), n, acc};
                                const auto expect = naive_gemm(g);
                                scalar_table().gemm(g);
                                check_close(c, expect, 1e-13);
                            }
    }

    TEST_CASE("SIMD variants agree with the scalar reference") {
        Rng rng(4);
        for (const KernelTable* t : simd_tables()) {
            CAPTURE(t->name);
            for (auto ta : {Trans::no, Trans::yes})
                for (auto tb : {Trans::no, Trans::yes})
                    for (bool acc : {false, true})
                        for (std::size_t m : {1, 4, 11, 33})
                            for (std::size_t n : {1, 8, 13, 40})
                                for (std::size_t k : {1, 7, 64}) {
                                    auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
                                    auto c0 = random_vec(m * n, rng), c1 = c0;
                                    GemmArgs g{ta, tb, m, n, k, a.data(), ta == Trans::no ? k : m,
                                               b.data(), tb == Trans::no ? n : k, c0.data(), n, acc};
                                    scalar_table().gemm(g);
                                    g.c = c1.data();
                                    t->gemm(g);
                                    check_close(c1, c0, 1e-12);
                                }
            for (std::size_t n : {0, 1, 3, 4, 7, 8, 31, 100}) {
                auto x = random_vec(n, rng), y = random_vec(n, rng);
                CHECK(std::abs(t->dot(x.data(), y.data(), n) - scalar_table().dot(x.data(), y.data(), n)) < 1e-12);
                auto y0 = y, y1 = y;
                scalar_table().axpy(0.7, x.data(), y0.data(), n);
                t->axpy(0.7, x.data(), y1.data(), n);
                check_close(y1, y0, 1e-15);
                std::vector<real> o0(n), o1(n);
                scalar_table().add(x.data(), y.data(), o0.data(), n);
                t->add(x.data(), y.data(), o1.data(), n);
                CHECK(o0 == o1);
                scalar_table().mul(x.data(), y.data(), o0.data(), n);
                t->mul(x.data(), y.data(), o1.data(), n);
                CHECK(o0 == o1);
                scalar_table().relu(x.data(), o0.data(), n);
                t->relu(x.data(), o1.data(), n);
                CHECK(o0 == o1);
            }
        }
    }
}
