#include "qfvs/attention.hpp"

#include <algorithm>
#include <cmath>

#include "op_util.hpp"

namespace qfvs::attention {

using detail::kern;
using detail::Node;
using detail::NodePtr;
using detail::wants;

namespace {

// Sum whose result depends only on the multiset of terms.
real order_free_sum(std::vector<real>& terms) {
    std::sort(terms.begin(), terms.end(), [](real a, real b) {
        return a < b || (a == b && std::signbit(a) && !std::signbit(b));
    });
    real s = 0;
    for (real t : terms) s += t;
    return s;
}

void check_mask(std::span<const std::uint8_t> mask, std::size_t expected, const char* what) {
    if (!mask.empty() && mask.size() != expected)
        throw ShapeError(std::string(what) + ": mask has " + std::to_string(mask.size()) + " entries, expected " +
                         std::to_string(expected));
}

}  // namespace

AttentionParams AttentionParams::create(ParameterStore& store, const std::string& prefix, std::size_t query_in,
                                        std::size_t key_in, std::size_t head, Rng& rng) {
    AttentionParams p;
    p.w_q = store.add(prefix + ".w_q", kaiming_uniform({query_in, head}, query_in, rng));
    p.w_k = store.add(prefix + ".w_k", kaiming_uniform({key_in, head}, key_in, rng));
    p.w_v = store.add(prefix + ".w_v", kaiming_uniform({key_in, head}, key_in, rng));
    return p;
}

Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> key_mask) {
    if (logits.rank() != 3) throw ShapeError("masked_softmax expects [B,Lq,Lk], got " + to_string(logits.shape()));
    const std::size_t batch = logits.shape()[0], lq = logits.shape()[1], lk = logits.shape()[2];
    check_mask(key_mask, batch * lk, "masked_softmax");
    const auto x = logits.data();
    std::vector<real> out(logits.numel(), real{0});
    std::vector<real> terms;
    for (std::size_t b = 0; b < batch; ++b) {
        auto valid = [&](std::size_t j) { return key_mask.empty() || key_mask[b * lk + j] != 0; };
        for (std::size_t i = 0; i < lq; ++i) {
            const std::size_t row = (b * lq + i) * lk;
            bool any = false;
            real mx = 0;
            for (std::size_t j = 0; j < lk; ++j)
                if (valid(j)) {
                    mx = any ? std::max(mx, x[row + j]) : x[row + j];
                    any = true;
                }
            if (!any)
                throw ContractError("attention: every key is masked for query row " + std::to_string(i) +
                                    " of batch " + std::to_string(b));
            terms.clear();
            for (std::size_t j = 0; j < lk; ++j)
                if (valid(j)) {
                    out[row + j] = std::exp(x[row + j] - mx);
                    terms.push_back(out[row + j]);
                }
            const real total = order_free_sum(terms);
            for (std::size_t j = 0; j < lk; ++j) out[row + j] = valid(j) ? out[row + j] / total : real{0};
        }
    }
    NodePtr xn = logits.node();
    const std::size_t rows = batch * lq;
    return detail::make_result(logits.shape(), std::move(out), {logits}, "masked_softmax", [xn, rows, lk](Node& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const real* w = self.data.data() + r * lk;
            const real* gy = self.grad.data() + r * lk;
            real dotp = 0;
            for (std::size_t j = 0; j < lk; ++j) dotp += w[j] * gy[j];
            for (std::size_t j = 0; j < lk; ++j) g[r * lk + j] += w[j] * (gy[j] - dotp);
        }
    });
}

Tensor attend(const Tensor& weights, const Tensor& values) {
    if (weights.rank() != 3 || values.rank() != 3 || weights.shape()[0] != values.shape()[0] ||
        weights.shape()[2] != values.shape()[1])
        throw ShapeError("attend: weights " + to_string(weights.shape()) + " vs values " + to_string(values.shape()));
    const std::size_t batch = weights.shape()[0], lq = weights.shape()[1], lk = weights.shape()[2];
    const std::size_t dv = values.shape()[2];
    const auto w = weights.data();
    const auto v = values.data();
    std::vector<real> out(batch * lq * dv);
    std::vector<real> terms(lk);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < lq; ++i) {
            const real* wrow = w.data() + (b * lq + i) * lk;
            for (std::size_t d = 0; d < dv; ++d) {
                for (std::size_t j = 0; j < lk; ++j) terms[j] = wrow[j] * v[(b * lk + j) * dv + d];
                out[(b * lq + i) * dv + d] = order_free_sum(terms);
            }
        }
    NodePtr wn = weights.node(), vn = values.node();
    return detail::make_result(Shape{batch, lq, dv}, std::move(out), {weights, values}, "attend",
                               [wn, vn, batch, lq, lk, dv](Node& self) {
        for (std::size_t b = 0; b < batch; ++b) {
            const real* gy = self.grad.data() + b * lq * dv;
            if (wants(wn)) {
                kernels::GemmArgs g;  // dW = dY V^T
                g.trans_b = kernels::Trans::yes;
                g.m = lq, g.n = lk, g.k = dv;
                g.a = gy, g.lda = dv;
                g.b = vn->data.data() + b * lk * dv, g.ldb = dv;
                g.c = wn->grad_buffer().data() + b * lq * lk, g.ldc = lk;
                g.accumulate = true;
                kern().gemm(g);
            }
            if (wants(vn)) {
                kernels::GemmArgs g;  // dV = W^T dY
                g.trans_a = kernels::Trans::yes;
                g.m = lk, g.n = dv, g.k = lq;
                g.a = wn->data.data() + b * lq * lk, g.lda = lk;
                g.b = gy, g.ldb = dv;
                g.c = vn->grad_buffer().data() + b * lk * dv, g.ldc = dv;
                g.accumulate = true;
                kern().gemm(g);
            }
        }
    });
}

AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::span<const std::uint8_t> key_mask) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
        throw ShapeError("scaled_dot_attention expects rank-3 q, k, v");
    if (q.shape()[2] != k.shape()[2])
        throw ShapeError("scaled_dot_attention: q " + to_string(q.shape()) + " and k " + to_string(k.shape()) +
                         " differ in feature dim");
    if (k.shape()[0] != v.shape()[0] || k.shape()[1] != v.shape()[1])
        throw ShapeError("scaled_dot_attention: k " + to_string(k.shape()) + " vs v " + to_string(v.shape()));
    const real inv_sqrt_d = real{1} / std::sqrt(static_cast<real>(q.shape()[2]));
    Tensor logits = scale(matmul(q, transpose(k, 1, 2)), inv_sqrt_d);
    Tensor weights = masked_softmax(logits, key_mask);
    return {attend(weights, v), weights};
}

Tensor local_self_attention(const Tensor& c_v, const AttentionParams& params, std::span<const std::uint8_t> mask) {
    if (c_v.rank() != 3) throw ShapeError("local_self_attention expects [S,R,C], got " + to_string(c_v.shape()));
    check_mask(mask, c_v.shape()[0] * c_v.shape()[1], "local_self_attention");
    Tensor q = linear(c_v, params.w_q, Tensor{});
    Tensor k = linear(c_v, params.w_k, Tensor{});
    Tensor v = linear(c_v, params.w_v, Tensor{});
    return scaled_dot_attention(q, k, v, mask).output;
}

QueryGuidedOutput query_guided_segment_attention(const Tensor& c_v, const Tensor& h_q, const AttentionParams& params,
                                                 std::span<const std::uint8_t> mask) {
    if (c_v.rank() != 3) throw ShapeError("query_guided_segment_attention expects [S,R,C], got " + to_string(c_v.shape()));
    const std::size_t segs = c_v.shape()[0], slots = c_v.shape()[1];
    check_mask(mask, segs * slots, "query_guided_segment_attention");
    const std::size_t head = params.head_dim();

    QueryGuidedOutput out;
    out.segment_valid.assign(segs, 0);
    std::vector<real> counts(segs, 0);
    Mask key_mask(segs * slots, 1);
    for (std::size_t s = 0; s < segs; ++s) {
        for (std::size_t r = 0; r < slots; ++r)
            if (mask.empty() || mask[s * slots + r]) counts[s] += 1;
        out.segment_valid[s] = counts[s] > 0;
        // An empty segment attends over its padding to stay well-defined; its
        // output is discarded below.
        if (!out.segment_valid[s]) continue;
        for (std::size_t r = 0; r < slots; ++r) key_mask[s * slots + r] = mask.empty() ? 1 : mask[s * slots + r];
    }

    Tensor q = reshape(linear(reshape(h_q, {1, h_q.numel()}), params.w_q, Tensor{}), {1, 1, head});
    Tensor k = linear(c_v, params.w_k, Tensor{});
    Tensor v = linear(c_v, params.w_v, Tensor{});
    Tensor logits = scale(matmul(q, transpose(k, 1, 2)), real{1} / std::sqrt(static_cast<real>(head)));
    out.weights = masked_softmax(logits, key_mask);

    // n_valid * w per slot; zero for padding and for empty segments.
    std::vector<real> factor(segs * slots, 0);
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t r = 0; r < slots; ++r)
            if (out.segment_valid[s] && (mask.empty() || mask[s * slots + r])) factor[s * slots + r] = counts[s];
    Tensor slot_weight = mul(reshape(out.weights, {segs, slots}), Tensor::from_data({segs, slots}, std::move(factor)));
    out.c_q = scale_rows(v, slot_weight);

    // Masked mean over slots: scale by 1/n_valid and sum, as a [S,1,R]x[S,R,H] product.
    std::vector<real> avg(segs * slots, 0);
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t r = 0; r < slots; ++r)
            if (out.segment_valid[s] && (mask.empty() || mask[s * slots + r])) avg[s * slots + r] = real{1} / counts[s];
    Tensor pooled = attend(Tensor::from_data({segs, 1, slots}, std::move(avg)), out.c_q);
    out.c_sq = reshape(pooled, {segs, head});
    return out;
}

Tensor global_attention(const Tensor& c_v, const Tensor& c_sq, const AttentionParams& params,
                        std::span<const std::uint8_t> segment_mask) {
    if (c_v.rank() != 3 || c_sq.rank() != 2 || c_sq.shape()[0] != c_v.shape()[0])
        throw ShapeError("global_attention: c_v " + to_string(c_v.shape()) + " vs c_sq " + to_string(c_sq.shape()));
    const std::size_t segs = c_v.shape()[0], slots = c_v.shape()[1];
    check_mask(segment_mask, segs, "global_attention");
    const std::size_t head = params.head_dim();
    Tensor q = reshape(linear(c_v, params.w_q, Tensor{}), {1, segs * slots, head});
    Tensor k = reshape(linear(c_sq, params.w_k, Tensor{}), {1, segs, head});
    Tensor v = reshape(linear(c_sq, params.w_v, Tensor{}), {1, segs, head});
    Tensor out = scaled_dot_attention(q, k, v, segment_mask).output;
    return reshape(out, {segs, slots, head});
}

Tensor concat_features(const Tensor& c_v, const Tensor& c_s, const Tensor& c_g) {
    for (const Tensor* t : {&c_s, &c_g})
        if (t->rank() != 3 || t->shape()[0] != c_v.shape()[0] || t->shape()[1] != c_v.shape()[1])
            throw ShapeError("concat_features: leading dims of " + to_string(t->shape()) + " differ from " +
                             to_string(c_v.shape()));
    return concat({c_v, c_s, c_g}, 2);
}

}  // namespace qfvs::attention
