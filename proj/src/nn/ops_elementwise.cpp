#include <cmath>

#include "op_util.hpp"
#include "qfvs/rng.hpp"

namespace qfvs {

using detail::kern;
using detail::Node;
using detail::NodePtr;
using detail::wants;

Tensor relu(const Tensor& x) {
    std::vector<real> out(x.numel());
    kern().relu(x.data().data(), out.data(), out.size());
    NodePtr xn = x.node();
    return detail::make_result(x.shape(), std::move(out), {x}, "relu", [xn](Node& self) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (xn->data[i] > 0) gx[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<real> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        // Split by sign so exp never overflows.
        const real v = in[i];
        if (v >= 0) {
            out[i] = real{1} / (real{1} + std::exp(-v));
        } else {
            const real e = std::exp(v);
            out[i] = e / (real{1} + e);
        }
    }
    NodePtr xn = x.node();
    return detail::make_result(x.shape(), std::move(out), {x}, "sigmoid", [xn](Node& self) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const real s = self.data[i];
            gx[i] += self.grad[i] * s * (real{1} - s);
        }
    });
}

Tensor softmax(const Tensor& x, std::ptrdiff_t axis_in) {
    const auto axis = detail::norm_axis(axis_in, x.rank());
    const auto& s = x.shape();
    const std::size_t outer = detail::prod(s, 0, axis);
    const std::size_t n = s[axis];
    const std::size_t inner = detail::prod(s, axis + 1, s.size());
    std::vector<real> out(x.numel());
    const auto in = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t q = 0; q < inner; ++q) {
            const std::size_t base = o * n * inner + q;
            real mx = in[base];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
            real total = 0;
            for (std::size_t j = 0; j < n; ++j) {
                const real e = std::exp(in[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
        }
    }
    NodePtr xn = x.node();
    return detail::make_result(s, std::move(out), {x}, "softmax", [xn, outer, n, inner](Node& self) {
        auto& gx = xn->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t q = 0; q < inner; ++q) {
                const std::size_t base = o * n * inner + q;
                real dotp = 0;
                for (std::size_t j = 0; j < n; ++j) dotp += self.grad[base + j * inner] * self.data[base + j * inner];
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t idx = base + j * inner;
                    gx[idx] += self.data[idx] * (self.grad[idx] - dotp);
                }
            }
        }
    });
}

namespace {

enum class BinOp { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, std::string_view name) {
    const bool same = a.shape() == b.shape();
    const bool a_scalar = !same && a.numel() == 1;
    const bool b_scalar = !same && b.numel() == 1;
    if (!same && !a_scalar && !b_scalar)
        throw ShapeError(std::string(name) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ (only scalar broadcasting is supported)");
    const Shape out_shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = numel(out_shape);
    std::vector<real> out(n);
    const auto ad = a.data();
    const auto bd = b.data();
    if (same) {
        switch (op) {
            case BinOp::add: kern().add(ad.data(), bd.data(), out.data(), n); break;
            case BinOp::mul: kern().mul(ad.data(), bd.data(), out.data(), n); break;
            case BinOp::sub:
                for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] - bd[i];
                break;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const real x = a_scalar ? ad[0] : ad[i];
            const real y = b_scalar ? bd[0] : bd[i];
            out[i] = op == BinOp::add ? x + y : op == BinOp::sub ? x - y : x * y;
        }
    }
    NodePtr an = a.node(), bn = b.node();
    return detail::make_result(out_shape, std::move(out), {a, b}, name,
                               [an, bn, op, a_scalar, b_scalar](Node& self) {
        const std::size_t n = self.grad.size();
        if (wants(an)) {
            auto& ga = an->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const real g = op == BinOp::mul ? self.grad[i] * bn->data[b_scalar ? 0 : i] : self.grad[i];
                ga[a_scalar ? 0 : i] += g;
            }
        }
        if (wants(bn)) {
            auto& gb = bn->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                real g = self.grad[i];
                if (op == BinOp::sub) g = -g;
                if (op == BinOp::mul) g *= an->data[a_scalar ? 0 : i];
                gb[b_scalar ? 0 : i] += g;
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul, "mul"); }

Tensor scale(const Tensor& x, real factor) {
    std::vector<real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= factor;
    NodePtr xn = x.node();
    return detail::make_result(x.shape(), std::move(out), {x}, "scale", [xn, factor](Node& self) {
        kern().axpy(factor, self.grad.data(), xn->grad_buffer().data(), self.grad.size());
    });
}

Tensor dropout(const Tensor& x, real p, Rng& rng, Mode mode) {
    if (!(p >= 0 && p < 1)) throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
    if (mode == Mode::eval || p == 0) return x;
    const real keep_scale = real{1} / (real{1} - p);
    std::vector<real> mask(x.numel());
    for (auto& m : mask) m = rng.uniform() < p ? real{0} : keep_scale;
    std::vector<real> out(x.numel());
    kern().mul(x.data().data(), mask.data(), out.data(), out.size());
    NodePtr xn = x.node();
    return detail::make_result(x.shape(), std::move(out), {x}, "dropout",
                               [xn, mask = std::move(mask)](Node& self) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * mask[i];
    });
}

Tensor binary_cross_entropy(const Tensor& probs, std::span<const real> labels, real eps) {
    const std::size_t n = probs.numel();
    if (n == 0 || labels.size() != n)
        throw ShapeError("binary_cross_entropy: " + std::to_string(n) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    const auto p = probs.data();
    std::vector<real> y(labels.begin(), labels.end());
    real total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const real q = std::clamp(p[i], eps, real{1} - eps);
        total -= y[i] * std::log(q) + (real{1} - y[i]) * std::log(real{1} - q);
    }
    NodePtr pn = probs.node();
    return detail::make_result({1}, {total / static_cast<real>(n)}, {probs}, "bce",
                               [pn, y = std::move(y), eps](Node& self) {
        auto& gp = pn->grad_buffer();
        const real g = self.grad[0] / static_cast<real>(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            const real raw = pn->data[i];
            if (raw < eps || raw > real{1} - eps) continue;  // clamped: flat
            gp[i] += g * (-(y[i] / raw) + (real{1} - y[i]) / (real{1} - raw));
        }
    });
}

}  // namespace qfvs
