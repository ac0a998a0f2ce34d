#include <doctest.h>

#include "grad_suite.hpp"

using namespace qfvs;
using namespace qfvs::testing;

TEST_SUITE("gradients") {
    TEST_CASE("every op matches central differences") {
        for (const auto& c : op_gradient_cases()) {
            CAPTURE(c.name);
            CAPTURE(c.result.worst);
            CHECK(c.result.max_rel_err < tol::grad_op);
        }
    }

    TEST_CASE("full network at test scale matches central differences") {
        const auto c = composite_gradient_case();
        CAPTURE(c.result.worst);
        CHECK(c.result.max_rel_err < tol::grad_composite);
    }

    TEST_CASE("gradient check catches a wrong backward") {
        auto bad = [](const std::vector<Tensor>& in) {
            const Tensor& x = in[0];
            std::vector<real> d(x.data().begin(), x.data().end());
            for (auto& v : d) v = v * v;
            return sum(detail::make_result(x.shape(), d, {x}, "bad_square", [x](detail::Node& n) {
                auto& g = n.parents[0]->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * x.data()[i];
            }));
        };
        Rng rng(1);
        CHECK(check_gradients(bad, {random_tensor({4}, rng)}).max_rel_err > 0.4);
    }
}
