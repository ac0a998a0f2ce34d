#include <cmath>

#include "op_util.hpp"

namespace qfvs {

using detail::kern;
using detail::Node;
using detail::NodePtr;
using detail::wants;
using kernels::GemmArgs;
using kernels::Trans;

namespace {

void require_rank3(const Tensor& x, std::string_view op) {
    if (x.rank() != 3) throw ShapeError(std::string(op) + " expects [B,C,L], got " + to_string(x.shape()));
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
    require_rank3(x, "conv1d");
    if (w.rank() != 3) throw ShapeError("conv1d weight must be [Cout,Cin,K], got " + to_string(w.shape()));
    const std::size_t batch = x.shape()[0], cin = x.shape()[1], len = x.shape()[2];
    const std::size_t cout = w.shape()[0], ksize = w.shape()[2];
    if (w.shape()[1] != cin)
        throw ShapeError("conv1d: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
    if (b.defined() && b.numel() != cout)
        throw ShapeError("conv1d: bias " + to_string(b.shape()) + " vs weight " + to_string(w.shape()));
    if (stride < 1) throw ConfigError("conv1d stride must be >= 1");
    if (ksize > len + 2 * pad)
        throw ConfigError("conv1d: kernel " + std::to_string(ksize) + " longer than padded input " +
                          std::to_string(len + 2 * pad));
    const std::size_t lout = (len + 2 * pad - ksize) / stride + 1;
    const std::size_t rows = cin * ksize;

    // im2col for every batch element; kept for the weight gradient.
    std::vector<real> cols(batch * rows * lout, real{0});
    const auto xd = x.data();
    for (std::size_t bi = 0; bi < batch; ++bi)
        for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t kk = 0; kk < ksize; ++kk) {
                real* row = cols.data() + (bi * rows + ci * ksize + kk) * lout;
                const real* src = xd.data() + (bi * cin + ci) * len;
                for (std::size_t t = 0; t < lout; ++t) {
                    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(pad);
                    if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) row[t] = src[pos];
                }
            }

    std::vector<real> out(batch * cout * lout);
    for (std::size_t bi = 0; bi < batch; ++bi) {
        GemmArgs g;
        g.m = cout, g.n = lout, g.k = rows;
        g.a = w.data().data(), g.lda = rows;
        g.b = cols.data() + bi * rows * lout, g.ldb = lout;
        g.c = out.data() + bi * cout * lout, g.ldc = lout;
        kern().gemm(g);
        if (b.defined())
            for (std::size_t co = 0; co < cout; ++co) {
                real* o = out.data() + (bi * cout + co) * lout;
                const real bias = b.data()[co];
                for (std::size_t t = 0; t < lout; ++t) o[t] += bias;
            }
    }

    NodePtr xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr;
    return detail::make_result(Shape{batch, cout, lout}, std::move(out), {x, w, b}, "conv1d",
                               [xn, wn, bn, cols = std::move(cols), batch, cin, len, cout, ksize, lout, rows, stride, pad](Node& self) {
        std::vector<real> dcols(rows * lout);
        for (std::size_t bi = 0; bi < batch; ++bi) {
            const real* gy = self.grad.data() + bi * cout * lout;
            if (wants(wn)) {
                GemmArgs g;
                g.trans_b = Trans::yes;
                g.m = cout, g.n = rows, g.k = lout;
                g.a = gy, g.lda = lout;
                g.b = cols.data() + bi * rows * lout, g.ldb = lout;
                g.c = wn->grad_buffer().data(), g.ldc = rows;
                g.accumulate = true;
                kern().gemm(g);
            }
            if (wants(bn)) {
                auto& gb = bn->grad_buffer();
                for (std::size_t co = 0; co < cout; ++co)
                    for (std::size_t t = 0; t < lout; ++t) gb[co] += gy[co * lout + t];
            }
            if (wants(xn)) {
                GemmArgs g;
                g.trans_a = Trans::yes;
                g.m = rows, g.n = lout, g.k = cout;
                g.a = wn->data.data(), g.lda = rows;
                g.b = gy, g.ldb = lout;
                g.c = dcols.data(), g.ldc = lout;
                kern().gemm(g);
                auto& gx = xn->grad_buffer();
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t kk = 0; kk < ksize; ++kk) {
                        const real* row = dcols.data() + (ci * ksize + kk) * lout;
                        real* dst = gx.data() + (bi * cin + ci) * len;
                        for (std::size_t t = 0; t < lout; ++t) {
                            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(pad);
                            if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[pos] += row[t];
                        }
                    }
            }
        }
    });
}

Tensor conv1d_transpose(const Tensor& x, const Tensor& w, std::size_t stride) {
    require_rank3(x, "conv1d_transpose");
    if (w.rank() != 3) throw ShapeError("conv1d_transpose weight must be [Cin,Cout,K], got " + to_string(w.shape()));
    if (stride < 1) throw ConfigError("conv1d_transpose stride must be >= 1");
    const std::size_t batch = x.shape()[0], cin = x.shape()[1], len = x.shape()[2];
    const std::size_t cout = w.shape()[1], ksize = w.shape()[2];
    if (w.shape()[0] != cin)
        throw ShapeError("conv1d_transpose: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
    const std::size_t lout = (len - 1) * stride + ksize;
    const std::size_t rows = cout * ksize;

    std::vector<real> out(batch * cout * lout, real{0});
    std::vector<real> cols(rows * len);
    for (std::size_t bi = 0; bi < batch; ++bi) {
        GemmArgs g;  // cols = W^T x
        g.trans_a = Trans::yes;
        g.m = rows, g.n = len, g.k = cin;
        g.a = w.data().data(), g.lda = rows;
        g.b = x.data().data() + bi * cin * len, g.ldb = len;
        g.c = cols.data(), g.ldc = len;
        kern().gemm(g);
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t kk = 0; kk < ksize; ++kk) {
                const real* row = cols.data() + (co * ksize + kk) * len;
                real* dst = out.data() + (bi * cout + co) * lout;
                for (std::size_t t = 0; t < len; ++t) dst[t * stride + kk] += row[t];
            }
    }

    NodePtr xn = x.node(), wn = w.node();
    return detail::make_result(Shape{batch, cout, lout}, std::move(out), {x, w}, "conv1d_transpose",
                               [xn, wn, batch, cin, len, cout, ksize, lout, rows, stride](Node& self) {
        std::vector<real> dcols(rows * len);
        for (std::size_t bi = 0; bi < batch; ++bi) {
            const real* gy = self.grad.data() + bi * cout * lout;
            for (std::size_t co = 0; co < cout; ++co)
                for (std::size_t kk = 0; kk < ksize; ++kk) {
                    real* row = dcols.data() + (co * ksize + kk) * len;
                    for (std::size_t t = 0; t < len; ++t) row[t] = gy[co * lout + t * stride + kk];
                }
            if (wants(xn)) {
                GemmArgs g;
                g.m = cin, g.n = len, g.k = rows;
                g.a = wn->data.data(), g.lda = rows;
                g.b = dcols.data(), g.ldb = len;
                g.c = xn->grad_buffer().data() + bi * cin * len, g.ldc = len;
                g.accumulate = true;
                kern().gemm(g);
            }
            if (wants(wn)) {
                GemmArgs g;
                g.trans_b = Trans::yes;
                g.m = cin, g.n = rows, g.k = len;
                g.a = xn->data.data() + bi * cin * len, g.lda = len;
                g.b = dcols.data(), g.ldb = len;
                g.c = wn->grad_buffer().data(), g.ldc = rows;
                g.accumulate = true;
                kern().gemm(g);
            }
        }
    });
}

Tensor maxpool1d(const Tensor& x, std::size_t kernel, std::size_t stride) {
    require_rank3(x, "maxpool1d");
    if (stride < 1 || kernel < 1) throw ConfigError("maxpool1d kernel and stride must be >= 1");
    const std::size_t batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
    if (kernel > len)
        throw ConfigError("maxpool1d: window " + std::to_string(kernel) + " exceeds length " + std::to_string(len));
    const std::size_t lout = (len - kernel) / stride + 1;
    std::vector<real> out(batch * ch * lout);
    std::vector<std::size_t> argmax(out.size());
    const auto d = x.data();
    for (std::size_t r = 0; r < batch * ch; ++r)
        for (std::size_t t = 0; t < lout; ++t) {
            std::size_t best = r * len + t * stride;
            for (std::size_t kk = 1; kk < kernel; ++kk) {
                const std::size_t i = r * len + t * stride + kk;
                if (d[i] > d[best]) best = i;
            }
            out[r * lout + t] = d[best];
            argmax[r * lout + t] = best;
        }
    NodePtr xn = x.node();
    return detail::make_result(Shape{batch, ch, lout}, std::move(out), {x}, "maxpool1d",
                               [xn, argmax = std::move(argmax)](Node& self) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
    });
}

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode) {
    require_rank3(x, "batchnorm1d");
    const std::size_t batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
    if (gamma.numel() != ch || beta.numel() != ch || state.running_mean.size() != ch || state.running_var.size() != ch)
        throw ShapeError("batchnorm1d: parameters do not match " + std::to_string(ch) + " channels");
    const std::size_t count = batch * len;
    if (mode == Mode::train && count < 2)
        throw ContractError("batchnorm1d: train mode needs batch*length >= 2, got " + std::to_string(count));

    const auto xd = x.data();
    std::vector<real> mu(ch), inv_std(ch);
    if (mode == Mode::train) {
        for (std::size_t c = 0; c < ch; ++c) {
            real s = 0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t t = 0; t < len; ++t) s += xd[(b * ch + c) * len + t];
            const real m = s / static_cast<real>(count);
            real v = 0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t t = 0; t < len; ++t) {
                    const real dlt = xd[(b * ch + c) * len + t] - m;
                    v += dlt * dlt;
                }
            const real var = v / static_cast<real>(count);
            mu[c] = m;
            inv_std[c] = real{1} / std::sqrt(var + state.eps);
            const real unbiased = v / static_cast<real>(count - 1);
            state.running_mean[c] = (real{1} - state.momentum) * state.running_mean[c] + state.momentum * m;
            state.running_var[c] = (real{1} - state.momentum) * state.running_var[c] + state.momentum * unbiased;
        }
    } else {
        for (std::size_t c = 0; c < ch; ++c) {
            mu[c] = state.running_mean[c];
            inv_std[c] = real{1} / std::sqrt(state.running_var[c] + state.eps);
        }
    }

    std::vector<real> xhat(x.numel()), out(x.numel());
    const auto gd = gamma.data(), bd = beta.data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t t = 0; t < len; ++t) {
                const std::size_t i = (b * ch + c) * len + t;
                xhat[i] = (xd[i] - mu[c]) * inv_std[c];
                out[i] = gd[c] * xhat[i] + bd[c];
            }

    NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
    const bool training = mode == Mode::train;
    return detail::make_result(x.shape(), std::move(out), {x, gamma, beta}, "batchnorm1d",
                               [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, ch, len, count, training](Node& self) {
        const auto& gy = self.grad;
        std::vector<real> sum_dy(ch, 0), sum_dy_xhat(ch, 0);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t i = (b * ch + c) * len + t;
                    sum_dy[c] += gy[i];
                    sum_dy_xhat[c] += gy[i] * xhat[i];
                }
        if (wants(gn)) {
            auto& gg = gn->grad_buffer();
            for (std::size_t c = 0; c < ch; ++c) gg[c] += sum_dy_xhat[c];
        }
        if (wants(bn)) {
            auto& gb = bn->grad_buffer();
            for (std::size_t c = 0; c < ch; ++c) gb[c] += sum_dy[c];
        }
        if (wants(xn)) {
            auto& gx = xn->grad_buffer();
            const real n = static_cast<real>(count);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t c = 0; c < ch; ++c) {
                    const real g = gn->data[c];
                    for (std::size_t t = 0; t < len; ++t) {
                        const std::size_t i = (b * ch + c) * len + t;
                        if (training) {
                            gx[i] += g * inv_std[c] / n * (n * gy[i] - sum_dy[c] - xhat[i] * sum_dy_xhat[c]);
                        } else {
                            gx[i] += g * inv_std[c] * gy[i];
                        }
                    }
                }
        }
    });
}

}  // namespace qfvs
