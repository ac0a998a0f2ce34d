#include <numeric>

#include "op_util.hpp"

namespace qfvs {

using detail::kern;
using detail::Node;
using detail::NodePtr;
using detail::wants;

Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis_in) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const auto& first = parts.front().shape();
    const auto axis = detail::norm_axis(axis_in, first.size());
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
        if (!ok) throw ShapeError("concat: " + to_string(s) + " does not match " + to_string(first) + " off axis " + std::to_string(axis));
        out_shape[axis] += s[axis];
    }
    const std::size_t outer = detail::prod(first, 0, axis);
    const std::size_t inner = detail::prod(first, axis + 1, first.size());
    const std::size_t out_row = out_shape[axis] * inner;
    std::vector<real> out(numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t chunk = p.shape()[axis] * inner;
        const auto d = p.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(d.begin() + o * chunk, chunk, out.begin() + o * out_row + off);
        off += chunk;
    }
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> chunks;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        chunks.push_back(p.shape()[axis] * inner);
    }
    return detail::make_result(std::move(out_shape), std::move(out), parts, "concat",
                               [nodes, chunks, offsets, outer, out_row](Node& self) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (!wants(nodes[k])) continue;
            auto& g = nodes[k]->grad_buffer();
            for (std::size_t o = 0; o < outer; ++o)
                kern().axpy(real{1}, self.grad.data() + o * out_row + offsets[k], g.data() + o * chunks[k], chunks[k]);
        }
    });
}

Tensor mean(const Tensor& x, std::ptrdiff_t axis_in) {
    const auto axis = detail::norm_axis(axis_in, x.rank());
    const auto& s = x.shape();
    const std::size_t outer = detail::prod(s, 0, axis);
    const std::size_t n = s[axis];
    const std::size_t inner = detail::prod(s, axis + 1, s.size());
    Shape out_shape;
    for (std::size_t d = 0; d < s.size(); ++d)
        if (d != axis) out_shape.push_back(s[d]);
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<real> out(outer * inner, real{0});
    const auto d = x.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t q = 0; q < inner; ++q) out[o * inner + q] += d[(o * n + j) * inner + q];
    for (auto& v : out) v /= static_cast<real>(n);
    NodePtr xn = x.node();
    return detail::make_result(std::move(out_shape), std::move(out), {x}, "mean", [xn, outer, n, inner](Node& self) {
        auto& g = xn->grad_buffer();
        const real w = real{1} / static_cast<real>(n);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t q = 0; q < inner; ++q) g[(o * n + j) * inner + q] += w * self.grad[o * inner + q];
    });
}

Tensor sum(const Tensor& x) {
    const auto d = x.data();
    const real total = std::accumulate(d.begin(), d.end(), real{0});
    NodePtr xn = x.node();
    return detail::make_result({1}, {total}, {x}, "sum", [xn](Node& self) {
        for (auto& g : xn->grad_buffer()) g += self.grad[0];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel())
        throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape) + " changes element count");
    std::vector<real> out(x.data().begin(), x.data().end());
    NodePtr xn = x.node();
    return detail::make_result(std::move(shape), std::move(out), {x}, "reshape", [xn](Node& self) {
        kern().axpy(real{1}, self.grad.data(), xn->grad_buffer().data(), self.grad.size());
    });
}

Tensor transpose(const Tensor& x, std::ptrdiff_t a0, std::ptrdiff_t a1) {
    const auto ax0 = detail::norm_axis(a0, x.rank());
    const auto ax1 = detail::norm_axis(a1, x.rank());
    const auto& s = x.shape();
    Shape out_shape = s;
    std::swap(out_shape[ax0], out_shape[ax1]);
    const std::size_t r = s.size();
    // Strides of the input, permuted into output axis order.
    std::vector<std::size_t> in_stride(r, 1);
    for (std::size_t d = r - 1; d > 0; --d) in_stride[d - 1] = in_stride[d] * s[d];
    std::vector<std::size_t> perm_stride = in_stride;
    std::swap(perm_stride[ax0], perm_stride[ax1]);

    const std::size_t n = x.numel();
    std::vector<std::size_t> src(n);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < r; ++d) off += idx[d] * perm_stride[d];
        src[flat] = off;
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }
    std::vector<real> out(n);
    const auto d = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = d[src[i]];
    NodePtr xn = x.node();
    return detail::make_result(std::move(out_shape), std::move(out), {x}, "transpose",
                               [xn, src = std::move(src)](Node& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
    });
}

Tensor slice(const Tensor& x, std::ptrdiff_t axis_in, std::size_t begin, std::size_t end) {
    const auto axis = detail::norm_axis(axis_in, x.rank());
    const auto& s = x.shape();
    if (begin >= end || end > s[axis])
        throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " + to_string(s));
    const std::size_t outer = detail::prod(s, 0, axis);
    const std::size_t inner = detail::prod(s, axis + 1, s.size());
    const std::size_t in_row = s[axis] * inner;
    const std::size_t chunk = (end - begin) * inner;
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    std::vector<real> out(outer * chunk);
    const auto d = x.data();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(d.begin() + o * in_row + begin * inner, chunk, out.begin() + o * chunk);
    NodePtr xn = x.node();
    return detail::make_result(std::move(out_shape), std::move(out), {x}, "slice",
                               [xn, outer, in_row, chunk, start = begin * inner](Node& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
            kern().axpy(real{1}, self.grad.data() + o * chunk, g.data() + o * in_row + start, chunk);
    });
}

Tensor index_select(const Tensor& x, std::span<const std::size_t> rows) {
    if (x.rank() != 2) throw ShapeError("index_select expects a 2-D tensor, got " + to_string(x.shape()));
    if (rows.empty()) throw ShapeError("index_select with no rows");
    const std::size_t width = x.shape()[1];
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<real> out(idx.size() * width);
    const auto d = x.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= x.shape()[0]) throw ShapeError("index_select row " + std::to_string(idx[i]) + " out of range");
        std::copy_n(d.begin() + idx[i] * width, width, out.begin() + i * width);
    }
    NodePtr xn = x.node();
    Shape out_shape{idx.size(), width};
    return detail::make_result(std::move(out_shape), std::move(out), {x}, "index_select",
                               [xn, idx = std::move(idx), width](Node& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
            kern().axpy(real{1}, self.grad.data() + i * width, g.data() + idx[i] * width, width);
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& w) {
    if (x.rank() < 1) throw ShapeError("scale_rows on scalar");
    const std::size_t width = x.shape().back();
    const std::size_t rows = x.numel() / width;
    if (w.numel() != rows)
        throw ShapeError("scale_rows: " + to_string(x.shape()) + " has " + std::to_string(rows) +
                         " rows but weights have shape " + to_string(w.shape()));
    std::vector<real> out(x.numel());
    const auto xd = x.data();
    const auto wd = w.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c) out[r * width + c] = xd[r * width + c] * wd[r];
    NodePtr xn = x.node(), wn = w.node();
    return detail::make_result(x.shape(), std::move(out), {x, w}, "scale_rows", [xn, wn, rows, width](Node& self) {
        if (wants(xn)) {
            auto& gx = xn->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                kern().axpy(wn->data[r], self.grad.data() + r * width, gx.data() + r * width, width);
        }
        if (wants(wn)) {
            auto& gw = wn->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                real acc = 0;
                for (std::size_t c = 0; c < width; ++c) acc += self.grad[r * width + c] * xn->data[r * width + c];
                gw[r] += acc;
            }
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    const std::size_t width = x.shape().back();
    if (b.numel() != width)
        throw ShapeError("add_bias: bias " + to_string(b.shape()) + " vs input " + to_string(x.shape()));
    const std::size_t rows = x.numel() / width;
    std::vector<real> out(x.data().begin(), x.data().end());
    const auto bd = b.data();
    for (std::size_t r = 0; r < rows; ++r) kern().axpy(real{1}, bd.data(), out.data() + r * width, width);
    NodePtr xn = x.node(), bn = b.node();
    return detail::make_result(x.shape(), std::move(out), {x, b}, "add_bias", [xn, bn, rows, width](Node& self) {
        if (wants(xn)) kern().axpy(real{1}, self.grad.data(), xn->grad_buffer().data(), self.grad.size());
        if (wants(bn)) {
            auto& gb = bn->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) kern().axpy(real{1}, self.grad.data() + r * width, gb.data(), width);
        }
    });
}

}  // namespace qfvs
