#include "op_util.hpp"

namespace qfvs {

using detail::kern;
using detail::Node;
using detail::NodePtr;
using detail::wants;
using kernels::GemmArgs;
using kernels::Trans;

namespace {

// Offsets (in matrices) of each broadcast batch element into a and b.
struct BatchPlan {
    Shape batch;
    std::vector<std::size_t> a_index;
    std::vector<std::size_t> b_index;
};

BatchPlan plan_batches(const Shape& as, const Shape& bs) {
    const std::size_t ra = as.size() - 2, rb = bs.size() - 2;
    const std::size_t r = std::max(ra, rb);
    BatchPlan plan;
    plan.batch.assign(r, 1);
    for (std::size_t d = 0; d < r; ++d) {
        const std::size_t da = d + ra >= r ? as[d + ra - r] : 1;
        const std::size_t db = d + rb >= r ? bs[d + rb - r] : 1;
        if (da != db && da != 1 && db != 1)
            throw ShapeError("matmul: batch dims of " + to_string(as) + " and " + to_string(bs) + " do not broadcast");
        plan.batch[d] = std::max(da, db);
    }
    const std::size_t total = numel(plan.batch);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t ai = 0, bi = 0;
        for (std::size_t d = 0; d < r; ++d) {
            const std::size_t da = d + ra >= r ? as[d + ra - r] : 1;
            const std::size_t db = d + rb >= r ? bs[d + rb - r] : 1;
            ai = ai * da + (da == 1 ? 0 : idx[d]);
            bi = bi * db + (db == 1 ? 0 : idx[d]);
        }
        plan.a_index.push_back(ai);
        plan.b_index.push_back(bi);
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < plan.batch[d]) break;
            idx[d] = 0;
        }
    }
    return plan;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) + " x " + to_string(b.shape()));
    const std::size_t m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
    if (k != k2)
        throw ShapeError("matmul: inner dims differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
    BatchPlan plan = plan_batches(a.shape(), b.shape());
    Shape out_shape = plan.batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    const std::size_t nb = plan.a_index.size();
    std::vector<real> out(nb * m * n);
    const real* ad = a.data().data();
    const real* bd = b.data().data();
    for (std::size_t i = 0; i < nb; ++i) {
        GemmArgs g;
        g.m = m, g.n = n, g.k = k;
        g.a = ad + plan.a_index[i] * m * k, g.lda = k;
        g.b = bd + plan.b_index[i] * k * n, g.ldb = n;
        g.c = out.data() + i * m * n, g.ldc = n;
        kern().gemm(g);
    }
    NodePtr an = a.node(), bn = b.node();
    return detail::make_result(std::move(out_shape), std::move(out), {a, b}, "matmul",
                               [an, bn, plan = std::move(plan), m, n, k](Node& self) {
        const std::size_t nb = plan.a_index.size();
        for (std::size_t i = 0; i < nb; ++i) {
            const real* gc = self.grad.data() + i * m * n;
            if (wants(an)) {
                GemmArgs g;  // dA = dC * B^T
                g.trans_b = Trans::yes;
                g.m = m, g.n = k, g.k = n;
                g.a = gc, g.lda = n;
                g.b = bn->data.data() + plan.b_index[i] * k * n, g.ldb = n;
                g.c = an->grad_buffer().data() + plan.a_index[i] * m * k, g.ldc = k;
                g.accumulate = true;
                kern().gemm(g);
            }
            if (wants(bn)) {
                GemmArgs g;  // dB = A^T * dC
                g.trans_a = Trans::yes;
                g.m = k, g.n = n, g.k = m;
                g.a = an->data.data() + plan.a_index[i] * m * k, g.lda = k;
                g.b = gc, g.ldb = n;
                g.c = bn->grad_buffer().data() + plan.b_index[i] * k * n, g.ldc = n;
                g.accumulate = true;
                kern().gemm(g);
            }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw ShapeError("linear: weight must be 2-D, got " + to_string(w.shape()));
    const std::size_t in = w.shape()[0], outd = w.shape()[1];
    if (x.dim(-1) != in)
        throw ShapeError("linear: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
    if (b.defined() && b.numel() != outd)
        throw ShapeError("linear: bias " + to_string(b.shape()) + " vs weight " + to_string(w.shape()));
    const std::size_t rows = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = outd;
    std::vector<real> out(rows * outd);
    GemmArgs g;
    g.m = rows, g.n = outd, g.k = in;
    g.a = x.data().data(), g.lda = in;
    g.b = w.data().data(), g.ldb = outd;
    g.c = out.data(), g.ldc = outd;
    kern().gemm(g);
    if (b.defined()) {
        const real* bd = b.data().data();
        for (std::size_t r = 0; r < rows; ++r) kern().add(out.data() + r * outd, bd, out.data() + r * outd, outd);
    }
    NodePtr xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
    return detail::make_result(std::move(out_shape), std::move(out), {x, w, b}, "linear",
                               [xn, wn, bn, rows, in, outd](Node& self) {
        if (wants(xn)) {
            GemmArgs g;
            g.trans_b = Trans::yes;
            g.m = rows, g.n = in, g.k = outd;
            g.a = self.grad.data(), g.lda = outd;
            g.b = wn->data.data(), g.ldb = outd;
            g.c = xn->grad_buffer().data(), g.ldc = in;
            g.accumulate = true;
            kern().gemm(g);
        }
        if (wants(wn)) {
            GemmArgs g;
            g.trans_a = Trans::yes;
            g.m = in, g.n = outd, g.k = rows;
            g.a = xn->data.data(), g.lda = in;
            g.b = self.grad.data(), g.ldb = outd;
            g.c = wn->grad_buffer().data(), g.ldc = outd;
            g.accumulate = true;
            kern().gemm(g);
        }
        if (wants(bn)) {
            auto& gb = bn->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) kern().axpy(real{1}, self.grad.data() + r * outd, gb.data(), outd);
        }
    });
}

}  // namespace qfvs
