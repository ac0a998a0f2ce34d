#pragma once

// Central finite-difference gradient check (five-point stencil) shared by the unit tests and the
// acceptance harness.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qfvs/rng.hpp"
#include "qfvs/tensor.hpp"

namespace qfvs::testing {

struct GradCheck {
    real max_rel_err = 0;
    std::string worst;  // "input i entry j: analytic a numeric n" of the worst entry
};

// Projects an output onto fixed random weights so every output entry
// contributes its own direction to the gradient.
inline Tensor project(const Tensor& out, std::uint64_t seed = 99) {
    Rng rng(seed);
    std::vector<real> w(out.numel());
    for (auto& x : w) x = rng.uniform(-1, 1);
    return sum(mul(out, Tensor::from_data(out.shape(), std::move(w))));
}

// f maps the inputs to a scalar. Inputs must require grad. The relative error
// of an entry is |a - n| / max(|a|, |n|, floor). With max_entries > 0 only
// that many evenly spaced entries of each input are perturbed.
inline GradCheck check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 std::vector<Tensor> inputs, std::size_t max_entries = 0, real h = 1e-4,
                                 real floor = 1e-6) {
    for (auto& t : inputs) t.zero_grad();
    backward(f(inputs));
    std::vector<std::vector<real>> analytic;
    for (auto& t : inputs) {
        if (t.has_grad()) analytic.emplace_back(t.grad().begin(), t.grad().end());
        else analytic.emplace_back(t.numel(), real{0});
    }
    GradCheck out;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto x = inputs[i].mutable_data();
        const std::size_t step = max_entries == 0 || x.size() <= max_entries ? 1 : x.size() / max_entries;
        for (std::size_t j = 0; j < x.size(); j += step) {
            const real keep = x[j];
            auto at = [&](real offset) {
                x[j] = keep + offset;
                return f(inputs).item();
            };
            // Five-point stencil: truncation error O(h^4).
            const real numeric = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
            x[j] = keep;
            const real a = analytic[i][j];
            const real err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (err > out.max_rel_err) {
                out.max_rel_err = err;
                out.worst = "input " + std::to_string(i) + " entry " + std::to_string(j) + ": analytic " +
                            std::to_string(a) + " numeric " + std::to_string(numeric);
            }
        }
    }
    return out;
}

inline Tensor random_tensor(Shape shape, Rng& rng, real lo = -1, real hi = 1, bool requires_grad = true) {
    std::vector<real> d(numel(shape));
    for (auto& x : d) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

}  // namespace qfvs::testing
