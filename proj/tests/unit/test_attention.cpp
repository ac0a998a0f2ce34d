#include <doctest.h>

#include "oracles.hpp"

using namespace qfvs;
using namespace qfvs::testing;

TEST_SUITE("attention") {
    TEST_CASE("weights form a simplex over valid keys and ignore masked ones") {
        const auto run = attention_properties(200, 8);
        CHECK(run.max_row_error < tol::simplex);
        CHECK(run.max_masked_weight == 0);
        CHECK(run.permutation_exact);
    }

    TEST_CASE("a query row with every key masked is a contract error") {
        auto logits = Tensor::zeros({1, 2, 3});
        const attention::Mask none{0, 0, 0};
        CHECK_THROWS_AS(attention::masked_softmax(logits, none), ContractError);
    }

    TEST_CASE("masked keys do not influence the output") {
        Rng rng(4);
        auto q = random_tensor({1, 2, 3}, rng, -1, 1, false);
        auto k = random_tensor({1, 4, 3}, rng, -1, 1, false);
        auto v = random_tensor({1, 4, 2}, rng, -1, 1, false);
        const attention::Mask mask{1, 0, 1, 0};
        auto base = attention::scaled_dot_attention(q, k, v, mask).output;
        std::vector<real> kv(k.data().begin(), k.data().end()), vv(v.data().begin(), v.data().end());
        for (std::size_t d = 0; d < 3; ++d) kv[1 * 3 + d] = 1e3;
        for (std::size_t d = 0; d < 2; ++d) vv[3 * 2 + d] = -1e3;
        auto other = attention::scaled_dot_attention(q, Tensor::from_data(k.shape(), kv), Tensor::from_data(v.shape(), vv), mask).output;
        for (std::size_t i = 0; i < base.numel(); ++i) CHECK(base.data()[i] == other.data()[i]);
    }

    TEST_CASE("query-guided segment feature is the masked mean of per-shot contributions") {
        Rng rng(5);
        ParameterStore store;
        auto p = attention::AttentionParams::create(store, "q", 6, 4, 3, rng);
        auto x = random_tensor({2, 3, 4}, rng, -1, 1, false);
        auto h = random_tensor({6}, rng, -1, 1, false);
        const attention::Mask mask{1, 0, 1, 0, 0, 0};
        auto out = attention::query_guided_segment_attention(x, h, p, mask);
        CHECK(out.segment_valid == attention::Mask{1, 0});
        for (std::size_t d = 0; d < 3; ++d) {
            const real mean = (out.c_q.data()[0 * 3 + d] + out.c_q.data()[2 * 3 + d]) / 2;
            CHECK(out.c_sq.data()[d] == doctest::Approx(mean).epsilon(1e-12));
            CHECK(out.c_sq.data()[3 + d] == 0);
            CHECK(out.c_q.data()[1 * 3 + d] == 0);
        }
        real w = 0;
        for (std::size_t r = 0; r < 3; ++r) w += out.weights.data()[r];
        CHECK(std::abs(w - 1) < tol::simplex);
    }

    TEST_CASE("global attention skips invalid segments") {
        Rng rng(6);
        ParameterStore store;
        auto p = attention::AttentionParams::create(store, "g", 4, 3, 3, rng);
        auto x = random_tensor({3, 2, 4}, rng, -1, 1, false);
        auto c_sq = random_tensor({3, 3}, rng, -1, 1, false);
        const attention::Mask seg{1, 0, 1};
        auto base = attention::global_attention(x, c_sq, p, seg);
        std::vector<real> changed(c_sq.data().begin(), c_sq.data().end());
        for (std::size_t d = 0; d < 3; ++d) changed[3 + d] = 50;
        auto other = attention::global_attention(x, Tensor::from_data(c_sq.shape(), changed), p, seg);
        for (std::size_t i = 0; i < base.numel(); ++i) CHECK(base.data()[i] == other.data()[i]);
        CHECK(attention::concat_features(x, x, base).shape() == Shape{3, 2, 11});
    }
}
