#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sandesc/gemm.hpp"
#include "sandesc/tensor.hpp"

namespace sandesc {

namespace detail {

template <typename T>
std::vector<T>& scratch_a() {
    thread_local std::vector<T> s;
    return s;
}
template <typename T>
std::vector<T>& scratch_b() {
    thread_local std::vector<T> s;
    return s;
}

template <typename T>
bool track(std::initializer_list<const Tensor<T>*> ins) {
    if (!GradMode::enabled()) return false;
    for (auto* t : ins)
        if (t->defined() && t->impl->in_graph()) return true;
    return false;
}

template <typename T>
void attach(Tensor<T>& out, std::initializer_list<Tensor<T>> parents,
            std::function<void(TensorImpl<T>&)> fn) {
    for (auto& p : parents)
        if (p.defined()) out.impl->parents.push_back(p.impl);
    out.impl->backward_fn = std::move(fn);
}

// col layout: row (c*K+ky)*K+kx, column oy*W+ox. Stride 1, zero padding.
template <typename T>
void im2col(const T* x, int C, int H, int W, int K, int pad, T* col) {
    const long HW = long(H) * W;
    for (int c = 0; c < C; ++c) {
        const T* xc = x + c * HW;
        for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
                T* dst = col + ((long(c) * K + ky) * K + kx) * HW;
                for (int oy = 0; oy < H; ++oy) {
                    const int iy = oy + ky - pad;
                    T* drow = dst + long(oy) * W;
                    if (iy < 0 || iy >= H) {
                        std::fill(drow, drow + W, T(0));
                        continue;
                    }
                    const T* srow = xc + long(iy) * W;
                    const int ox0 = std::max(0, pad - kx);
                    const int ox1 = std::min(W, W + pad - kx);
                    for (int ox = 0; ox < ox0; ++ox) drow[ox] = T(0);
                    for (int ox = ox0; ox < ox1; ++ox) drow[ox] = srow[ox + kx - pad];
                    for (int ox = ox1; ox < W; ++ox) drow[ox] = T(0);
                }
            }
        }
    }
}

// Transpose of im2col: accumulates col entries back onto the image grid.
// Per input pixel the (ky,kx) visit order is fixed, keeping sums bitwise
// reproducible.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int K, int pad, T* x) {
    const long HW = long(H) * W;
    for (int c = 0; c < C; ++c) {
        T* xc = x + c * HW;
        for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
                const T* src = col + ((long(c) * K + ky) * K + kx) * HW;
                const int oy0 = std::max(0, pad - ky);
                const int oy1 = std::min(H, H + pad - ky);
                const int ox0 = std::max(0, pad - kx);
                const int ox1 = std::min(W, W + pad - kx);
                for (int oy = oy0; oy < oy1; ++oy) {
                    const T* srow = src + long(oy) * W;
                    T* drow = xc + long(oy + ky - pad) * W;
                    for (int ox = ox0; ox < ox1; ++ox) drow[ox + kx - pad] += srow[ox];
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution, stride 1, zero padding floor(K/2): output spatial size equals
// input spatial size. `bias` may be undefined.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int pad) {
    SD_CHECK(x.defined() && x.rank() == 4, "conv2d: input must be B x C x H x W");
    SD_CHECK(w.defined() && w.rank() == 4, "conv2d: kernel must be Cout x Cin x K x K");
    const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), K = w.dim(2);
    SD_CHECK(w.dim(1) == Cin, "conv2d: channel axis mismatch: kernel expects ", w.dim(1),
             " input channels, input has ", Cin);
    SD_CHECK(w.dim(3) == K, "conv2d: kernel must be square, got ", K, "x", w.dim(3));
    SD_CHECK(K % 2 == 1, "conv2d: kernel size must be odd, got ", K);
    SD_CHECK(pad == K / 2, "conv2d: padding must be floor(K/2) = ", K / 2, ", got ", pad);
    if (bias.defined())
        SD_CHECK(bias.rank() == 1 && bias.dim(0) == Cout, "conv2d: bias must have ", Cout,
                 " entries");

    const long HW = long(H) * W;
    const long CKK = long(Cin) * K * K;
    Tensor<T> out(Shape{B, Cout, H, W});

    auto run_one = [&](int b) {
        auto& col = detail::scratch_a<T>();
        col.resize(size_t(CKK * HW));
        detail::im2col(x.data() + b * Cin * HW, Cin, H, W, K, pad, col.data());
        T* ob = out.data() + b * Cout * HW;
        gemm_nn(w.data(), col.data(), ob, Cout, int(CKK), int(HW));
        if (bias.defined()) {
            const T* bv = bias.data();
            for (int o = 0; o < Cout; ++o) {
                T* row = ob + o * HW;
                for (long i = 0; i < HW; ++i) row[i] += bv[o];
            }
        }
    };
    if (B > 1) {
#pragma omp parallel for schedule(static)
        for (int b = 0; b < B; ++b) run_one(b);
    } else {
        run_one(0);
    }

    if (detail::track<T>({&x, &w, &bias})) {
        auto xi = x.impl, wi = w.impl;
        auto bi = bias.defined() ? bias.impl : nullptr;
        detail::attach<T>(out, {x, w, bias},
                       [xi, wi, bi, B, Cin, H, W, Cout, K, pad, HW, CKK](TensorImpl<T>& self) {
            const T* gy = self.grad_buf().data();
            const bool need_dx = xi->in_graph();
            const bool need_dw = wi->in_graph();
            T* dx = need_dx ? xi->grad_buf().data() : nullptr;
            T* dw = need_dw ? wi->grad_buf().data() : nullptr;
            const T* wv = wi->v.data();
            // dX is itself a same-padded convolution of the output gradient
            // with the spatially flipped, channel-swapped kernel
            std::vector<T> wflip;
            if (need_dx) {
                wflip.resize(size_t(Cin) * Cout * K * K);
                for (int o = 0; o < Cout; ++o)
                    for (int c = 0; c < Cin; ++c)
                        for (int dy = 0; dy < K; ++dy)
                            for (int dxk = 0; dxk < K; ++dxk)
                                wflip[((size_t(c) * Cout + o) * K + (K - 1 - dy)) * K +
                                      (K - 1 - dxk)] =
                                    wv[((size_t(o) * Cin + c) * K + dy) * K + dxk];
            }
            // per-image weight-gradient partials, reduced in batch order so
            // the sum is independent of the thread count
            std::vector<T> partials(need_dw ? size_t(B) * size_t(Cout) * size_t(CKK) : 0);
            const long OKK = long(Cout) * K * K;
#pragma omp parallel for schedule(static)
            for (int b = 0; b < B; ++b) {
                if (need_dw) {
                    auto& col = detail::scratch_a<T>();
                    col.resize(size_t(CKK * HW));
                    detail::im2col(xi->v.data() + b * Cin * HW, Cin, H, W, K, pad, col.data());
                    gemm_nt(gy + b * Cout * HW, col.data(),
                            partials.data() + size_t(b) * size_t(Cout) * size_t(CKK), Cout,
                            int(HW), int(CKK));
                }
                if (need_dx) {
                    auto& colg = detail::scratch_b<T>();
                    colg.resize(size_t(OKK * HW));
                    detail::im2col(gy + b * Cout * HW, Cout, H, W, K, pad, colg.data());
                    gemm_nn(wflip.data(), colg.data(), dx + b * Cin * HW, Cin, int(OKK),
                            int(HW), true);
                }
            }
            if (need_dw) {
                const size_t n = size_t(Cout) * size_t(CKK);
                for (int b = 0; b < B; ++b) {
                    const T* part = partials.data() + size_t(b) * n;
                    for (size_t i = 0; i < n; ++i) dw[i] += part[i];
                }
            }
            if (bi && bi->in_graph()) {
                T* db = bi->grad_buf().data();
                for (int b = 0; b < B; ++b)
                    for (int o = 0; o < Cout; ++o) {
                        const T* row = gy + (b * Cout + o) * HW;
                        T acc = T(0);
                        for (long i = 0; i < HW; ++i) acc += row[i];
                        db[o] += acc;
                    }
            }
        });
    }
    return out;
}

// 2x2 average pooling with stride 2; trailing odd rows/columns fall into a
// clipped window, so the output is ceil(H/2) x ceil(W/2).
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
    SD_CHECK(x.defined() && x.rank() == 4, "avg_pool2: input must be B x C x H x W");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    SD_CHECK(H >= 2 && W >= 2, "avg_pool2: spatial size must be at least 2x2, got ", H, "x", W);
    const int OH = (H + 1) / 2, OW = (W + 1) / 2;
    Tensor<T> out(Shape{B, C, OH, OW});
    const long HW = long(H) * W, OHW = long(OH) * OW;

#pragma omp parallel for schedule(static) if (long(B) * C > 8)
    for (long bc = 0; bc < long(B) * C; ++bc) {
        const T* src = x.data() + bc * HW;
        T* dst = out.data() + bc * OHW;
        for (int oy = 0; oy < OH; ++oy) {
            const int y1 = std::min(2 * oy + 2, H);
            for (int ox = 0; ox < OW; ++ox) {
                const int x1 = std::min(2 * ox + 2, W);
                T acc = T(0);
                int n = 0;
                for (int yy = 2 * oy; yy < y1; ++yy)
                    for (int xx = 2 * ox; xx < x1; ++xx, ++n) acc += src[yy * long(W) + xx];
                dst[oy * long(OW) + ox] = acc / T(n);
            }
        }
    }

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, B, C, H, W, OH, OW, HW, OHW](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* gy = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
#pragma omp parallel for schedule(static) if (long(B) * C > 8)
            for (long bc = 0; bc < long(B) * C; ++bc) {
                const T* g = gy + bc * OHW;
                T* d = dx + bc * HW;
                for (int oy = 0; oy < OH; ++oy) {
                    const int y1 = std::min(2 * oy + 2, H);
                    for (int ox = 0; ox < OW; ++ox) {
                        const int x1 = std::min(2 * ox + 2, W);
                        const int n = (y1 - 2 * oy) * (x1 - 2 * ox);
                        const T share = g[oy * long(OW) + ox] / T(n);
                        for (int yy = 2 * oy; yy < y1; ++yy)
                            for (int xx = 2 * ox; xx < x1; ++xx) d[yy * long(W) + xx] += share;
                    }
                }
            }
        });
    }
    return out;
}

namespace detail {
// Half-pixel-center source coordinates for 2x bilinear upsampling.
struct LerpTap {
    int lo, hi;
    double frac;
};
inline std::vector<LerpTap> upsample_taps(int in) {
    std::vector<LerpTap> taps(size_t(2 * in));
    for (int o = 0; o < 2 * in; ++o) {
        double s = (o + 0.5) / 2.0 - 0.5;
        s = std::min(std::max(s, 0.0), double(in - 1));
        int lo = int(std::floor(s));
        taps[o] = {lo, std::min(lo + 1, in - 1), s - lo};
    }
    return taps;
}
}  // namespace detail

// Doubles H and W by bilinear interpolation with half-pixel centers and
// border clamping; constants are preserved exactly.
template <typename T>
Tensor<T> upsample_bilinear2(const Tensor<T>& x) {
    SD_CHECK(x.defined() && x.rank() == 4, "upsample_bilinear2: input must be B x C x H x W");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    SD_CHECK(H >= 1 && W >= 1, "upsample_bilinear2: empty spatial extent");
    const int OH = 2 * H, OW = 2 * W;
    Tensor<T> out(Shape{B, C, OH, OW});
    const auto ty = detail::upsample_taps(H);
    const auto tx = detail::upsample_taps(W);
    const long HW = long(H) * W, OHW = long(OH) * OW;

#pragma omp parallel for schedule(static) if (long(B) * C > 8)
    for (long bc = 0; bc < long(B) * C; ++bc) {
        const T* src = x.data() + bc * HW;
        T* dst = out.data() + bc * OHW;
        for (int oy = 0; oy < OH; ++oy) {
            const auto& y = ty[oy];
            const T* r0 = src + long(y.lo) * W;
            const T* r1 = src + long(y.hi) * W;
            for (int ox = 0; ox < OW; ++ox) {
                const auto& c = tx[ox];
                const T top = r0[c.lo] + T(c.frac) * (r0[c.hi] - r0[c.lo]);
                const T bot = r1[c.lo] + T(c.frac) * (r1[c.hi] - r1[c.lo]);
                dst[oy * long(OW) + ox] = top + T(y.frac) * (bot - top);
            }
        }
    }

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, B, C, H, W, OH, OW, ty, tx, HW, OHW](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* gy = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
#pragma omp parallel for schedule(static) if (long(B) * C > 8)
            for (long bc = 0; bc < long(B) * C; ++bc) {
                const T* g = gy + bc * OHW;
                T* d = dx + bc * HW;
                for (int oy = 0; oy < OH; ++oy) {
                    const auto& y = ty[oy];
                    const T fy = T(y.frac);
                    for (int ox = 0; ox < OW; ++ox) {
                        const auto& c = tx[ox];
                        const T fx = T(c.frac);
                        const T gv = g[oy * long(OW) + ox];
                        d[y.lo * long(W) + c.lo] += gv * (T(1) - fy) * (T(1) - fx);
                        d[y.lo * long(W) + c.hi] += gv * (T(1) - fy) * fx;
                        d[y.hi * long(W) + c.lo] += gv * fy * (T(1) - fx);
                        d[y.hi * long(W) + c.hi] += gv * fy * fx;
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch normalization over (B,H,W) per channel. Train mode uses batch
// statistics (differentiable through them) and updates the running buffers
// in place; eval mode reads the running buffers.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                     std::vector<T>& running_mean, std::vector<T>& running_var, bool training,
                     T momentum = T(0.1), T eps = T(1e-5)) {
    SD_CHECK(x.defined() && x.rank() == 4, "batch_norm: input must be B x C x H x W");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    SD_CHECK(scale.rank() == 1 && scale.dim(0) == C, "batch_norm: scale must have ", C, " entries");
    SD_CHECK(shift.rank() == 1 && shift.dim(0) == C, "batch_norm: shift must have ", C, " entries");
    SD_CHECK(int(running_mean.size()) == C && int(running_var.size()) == C,
             "batch_norm: running stats must have ", C, " entries");
    const long N = long(B) * H * W;
    if (training) SD_CHECK(N >= 2, "batch_norm: train mode needs at least 2 samples per channel");

    const long HW = long(H) * W;
    Tensor<T> out(x.shape());
    std::vector<T> mean(C), rstd(C);

#pragma omp parallel for schedule(static) if (C > 2)
    for (int c = 0; c < C; ++c) {
        T mu, rs;
        if (training) {
            T s = T(0);
            for (int b = 0; b < B; ++b) {
                const T* p = x.data() + (long(b) * C + c) * HW;
                for (long i = 0; i < HW; ++i) s += p[i];
            }
            mu = s / T(N);
            T sq = T(0);
            for (int b = 0; b < B; ++b) {
                const T* p = x.data() + (long(b) * C + c) * HW;
                for (long i = 0; i < HW; ++i) sq += (p[i] - mu) * (p[i] - mu);
            }
            const T var = sq / T(N);
            rs = T(1) / std::sqrt(var + eps);
            running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mu;
            running_var[c] =
                (T(1) - momentum) * running_var[c] + momentum * var * T(N) / T(N - 1);
        } else {
            mu = running_mean[c];
            rs = T(1) / std::sqrt(running_var[c] + eps);
        }
        mean[c] = mu;
        rstd[c] = rs;
        const T sc = scale.data()[c], sh = shift.data()[c];
        for (int b = 0; b < B; ++b) {
            const T* p = x.data() + (long(b) * C + c) * HW;
            T* q = out.data() + (long(b) * C + c) * HW;
            for (long i = 0; i < HW; ++i) q[i] = (p[i] - mu) * rs * sc + sh;
        }
    }

    if (detail::track<T>({&x, &scale, &shift})) {
        auto xi = x.impl, si = scale.impl, hi = shift.impl;
        detail::attach<T>(out, {x, scale, shift},
                       [xi, si, hi, B, C, HW, N, mean, rstd, training](TensorImpl<T>& self) {
            const T* gy = self.grad_buf().data();
            const bool need_dx = xi->in_graph();
            T* dx = need_dx ? xi->grad_buf().data() : nullptr;
            T* dscale = si->in_graph() ? si->grad_buf().data() : nullptr;
            T* dshift = hi->in_graph() ? hi->grad_buf().data() : nullptr;
#pragma omp parallel for schedule(static) if (C > 2)
            for (int c = 0; c < C; ++c) {
                const T mu = mean[c], rs = rstd[c], sc = si->v[c];
                T sum_g = T(0), sum_gx = T(0);
                for (int b = 0; b < B; ++b) {
                    const T* xv = xi->v.data() + (long(b) * C + c) * HW;
                    const T* g = gy + (long(b) * C + c) * HW;
                    for (long i = 0; i < HW; ++i) {
                        sum_g += g[i];
                        sum_gx += g[i] * (xv[i] - mu) * rs;
                    }
                }
                if (dscale) dscale[c] += sum_gx;
                if (dshift) dshift[c] += sum_g;
                if (!need_dx) continue;
                for (int b = 0; b < B; ++b) {
                    const T* xv = xi->v.data() + (long(b) * C + c) * HW;
                    const T* g = gy + (long(b) * C + c) * HW;
                    T* d = dx + (long(b) * C + c) * HW;
                    if (training) {
                        for (long i = 0; i < HW; ++i) {
                            const T xhat = (xv[i] - mu) * rs;
                            d[i] += sc * rs * (g[i] - sum_g / T(N) - xhat * sum_gx / T(N));
                        }
                    } else {
                        for (long i = 0; i < HW; ++i) d[i] += sc * rs * g[i];
                    }
                }
            }
        });
    }
    return out;
}

// Exact-erf GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    SD_CHECK(x.defined(), "gelu: undefined tensor");
    Tensor<T> out(x.shape());
    const long n = x.numel();
    const T inv_sqrt2 = T(0.7071067811865475244);
    const T* xv = x.data();
    T* yv = out.data();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (long i = 0; i < n; ++i)
        yv[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, n](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            const T* xv = xi->v.data();
            T* dx = xi->grad_buf().data();
            const T inv_sqrt2 = T(0.7071067811865475244);
            const T inv_sqrt2pi = T(0.3989422804014326779);
#pragma omp parallel for schedule(static) if (n > 16384)
            for (long i = 0; i < n; ++i) {
                const T cdf = T(0.5) * (T(1) + std::erf(xv[i] * inv_sqrt2));
                const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * xv[i] * xv[i]);
                dx[i] += g[i] * (cdf + xv[i] * pdf);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    SD_CHECK(x.defined(), "sigmoid: undefined tensor");
    Tensor<T> out(x.shape());
    const long n = x.numel();
    const T* xv = x.data();
    T* yv = out.data();
    for (long i = 0; i < n; ++i) yv[i] = T(1) / (T(1) + std::exp(-xv[i]));

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, n](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            const T* y = self.v.data();
            T* dx = xi->grad_buf().data();
            for (long i = 0; i < n; ++i) dx[i] += g[i] * y[i] * (T(1) - y[i]);
        });
    }
    return out;
}

// Concatenate along the channel axis; `a` occupies channels [0, C1).
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    SD_CHECK(a.defined() && b.defined() && a.rank() == 4 && b.rank() == 4,
             "concat_channels: inputs must be B x C x H x W");
    SD_CHECK(a.dim(0) == b.dim(0), "concat_channels: batch axis mismatch: ", a.dim(0), " vs ",
             b.dim(0));
    SD_CHECK(a.dim(2) == b.dim(2), "concat_channels: height axis mismatch: ", a.dim(2), " vs ",
             b.dim(2));
    SD_CHECK(a.dim(3) == b.dim(3), "concat_channels: width axis mismatch: ", a.dim(3), " vs ",
             b.dim(3));
    const int B = a.dim(0), C1 = a.dim(1), C2 = b.dim(1), H = a.dim(2), W = a.dim(3);
    const long HW = long(H) * W;
    Tensor<T> out(Shape{B, C1 + C2, H, W});
    for (int bb = 0; bb < B; ++bb) {
        std::memcpy(out.data() + long(bb) * (C1 + C2) * HW, a.data() + long(bb) * C1 * HW,
                    size_t(C1 * HW) * sizeof(T));
        std::memcpy(out.data() + (long(bb) * (C1 + C2) + C1) * HW, b.data() + long(bb) * C2 * HW,
                    size_t(C2 * HW) * sizeof(T));
    }

    if (detail::track<T>({&a, &b})) {
        auto ai = a.impl, bi = b.impl;
        detail::attach<T>(out, {a, b}, [ai, bi, B, C1, C2, HW](TensorImpl<T>& self) {
            const T* g = self.grad_buf().data();
            if (ai->in_graph()) {
                T* da = ai->grad_buf().data();
                for (int bb = 0; bb < B; ++bb) {
                    const T* src = g + long(bb) * (C1 + C2) * HW;
                    T* dst = da + long(bb) * C1 * HW;
                    for (long i = 0; i < C1 * HW; ++i) dst[i] += src[i];
                }
            }
            if (bi->in_graph()) {
                T* db = bi->grad_buf().data();
                for (int bb = 0; bb < B; ++bb) {
                    const T* src = g + (long(bb) * (C1 + C2) + C1) * HW;
                    T* dst = db + long(bb) * C2 * HW;
                    for (long i = 0; i < C2 * HW; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

namespace detail {
// Shared normalization backward for one vector of length C with stride.
template <typename T>
void l2norm_vec_backward(const T* x, const T* g, T* dx, int C, long stride, T eps) {
    T sq = T(0);
    for (int c = 0; c < C; ++c) sq += x[c * stride] * x[c * stride];
    const T norm = std::sqrt(sq);
    if (norm >= eps) {
        T dot = T(0);
        for (int c = 0; c < C; ++c) dot += g[c * stride] * x[c * stride] / norm;
        for (int c = 0; c < C; ++c)
            dx[c * stride] += (g[c * stride] - (x[c * stride] / norm) * dot) / norm;
    } else {
        for (int c = 0; c < C; ++c) dx[c * stride] += g[c * stride] / eps;
    }
}
}  // namespace detail

// Per-pixel channel vectors divided by max(||.||_2, eps). Channel-major
// streaming passes; per-pixel accumulation runs over ascending channels.
template <typename T>
Tensor<T> l2_normalize_channels(const Tensor<T>& x, T eps = T(1e-8)) {
    SD_CHECK(x.defined() && x.rank() == 4, "l2_normalize_channels: input must be B x C x H x W");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const long HW = long(H) * W;
    Tensor<T> out(x.shape());
#pragma omp parallel for schedule(static) if (B > 1)
    for (int b = 0; b < B; ++b) {
        const T* xb = x.data() + long(b) * C * HW;
        T* yb = out.data() + long(b) * C * HW;
        auto& inv = detail::scratch_a<T>();
        inv.assign(size_t(HW), T(0));
        for (int c = 0; c < C; ++c) {
            const T* row = xb + long(c) * HW;
            for (long p = 0; p < HW; ++p) inv[size_t(p)] += row[p] * row[p];
        }
        for (long p = 0; p < HW; ++p)
            inv[size_t(p)] = T(1) / std::max(std::sqrt(inv[size_t(p)]), eps);
        for (int c = 0; c < C; ++c) {
            const T* row = xb + long(c) * HW;
            T* dst = yb + long(c) * HW;
            for (long p = 0; p < HW; ++p) dst[p] = row[p] * inv[size_t(p)];
        }
    }

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, B, C, HW, eps](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
#pragma omp parallel for schedule(static) if (B > 1)
            for (int b = 0; b < B; ++b) {
                const long off = long(b) * C * HW;
                const T* xb = xi->v.data() + off;
                const T* gb = g + off;
                // inv_norm and (g . x) * inv_norm^3 per pixel, then one
                // streaming update pass per channel
                auto& inv = detail::scratch_a<T>();
                auto& coef = detail::scratch_b<T>();
                inv.assign(size_t(HW), T(0));
                coef.assign(size_t(HW), T(0));
                for (int c = 0; c < C; ++c) {
                    const T* row = xb + long(c) * HW;
                    for (long p = 0; p < HW; ++p) inv[size_t(p)] += row[p] * row[p];
                }
                for (int c = 0; c < C; ++c) {
                    const T* xr = xb + long(c) * HW;
                    const T* gr = gb + long(c) * HW;
                    for (long p = 0; p < HW; ++p) coef[size_t(p)] += gr[p] * xr[p];
                }
                for (long p = 0; p < HW; ++p) {
                    const T norm = std::sqrt(inv[size_t(p)]);
                    if (norm >= eps) {
                        const T in = T(1) / norm;
                        inv[size_t(p)] = in;
                        coef[size_t(p)] *= in * in * in;
                    } else {
                        inv[size_t(p)] = T(1) / eps;
                        coef[size_t(p)] = T(0);
                    }
                }
                for (int c = 0; c < C; ++c) {
                    const T* xr = xb + long(c) * HW;
                    const T* gr = gb + long(c) * HW;
                    T* dr = dx + off + long(c) * HW;
                    for (long p = 0; p < HW; ++p)
                        dr[p] += gr[p] * inv[size_t(p)] - xr[p] * coef[size_t(p)];
                }
            }
        });
    }
    return out;
}

// Row-wise variant for N x C descriptor matrices.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-8)) {
    SD_CHECK(x.defined() && x.rank() == 2, "l2_normalize_rows: input must be N x C");
    const int N = x.dim(0), C = x.dim(1);
    Tensor<T> out(x.shape());
    for (int i = 0; i < N; ++i) {
        const T* xr = x.data() + long(i) * C;
        T* yr = out.data() + long(i) * C;
        T sq = T(0);
        for (int c = 0; c < C; ++c) sq += xr[c] * xr[c];
        const T m = std::max(std::sqrt(sq), eps);
        for (int c = 0; c < C; ++c) yr[c] = xr[c] / m;
    }

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, N, C, eps](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
            for (int i = 0; i < N; ++i)
                detail::l2norm_vec_backward(xi->v.data() + long(i) * C, g + long(i) * C,
                                            dx + long(i) * C, C, 1, eps);
        });
    }
    return out;
}

// Per-channel average and maximum over the spatial extent, each B x C.
// Max routes its gradient to the first attaining element in scan order.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> spatial_stats(const Tensor<T>& x) {
    SD_CHECK(x.defined() && x.rank() == 4, "spatial_stats: input must be B x C x H x W");
    const int B = x.dim(0), C = x.dim(1);
    const long HW = long(x.dim(2)) * x.dim(3);
    SD_CHECK(HW > 0, "spatial_stats: empty spatial extent");
    Tensor<T> avg(Shape{B, C}), mx(Shape{B, C});
    std::vector<long> argmax(size_t(B) * C);
    for (long bc = 0; bc < long(B) * C; ++bc) {
        const T* p = x.data() + bc * HW;
        T s = T(0), best = p[0];
        long bi = 0;
        for (long i = 0; i < HW; ++i) {
            s += p[i];
            if (p[i] > best) {
                best = p[i];
                bi = i;
            }
        }
        avg.data()[bc] = s / T(HW);
        mx.data()[bc] = best;
        argmax[size_t(bc)] = bi;
    }

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(avg, {x}, [xi, B, C, HW](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
            for (long bc = 0; bc < long(B) * C; ++bc) {
                const T share = g[bc] / T(HW);
                T* d = dx + bc * HW;
                for (long i = 0; i < HW; ++i) d[i] += share;
            }
        });
        detail::attach<T>(mx, {x}, [xi, B, C, HW, argmax](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
            for (long bc = 0; bc < long(B) * C; ++bc) dx[bc * HW + argmax[size_t(bc)]] += g[bc];
        });
    }
    return {avg, mx};
}

// Per-position average and maximum over channels, stacked as B x 2 x H x W
// with the average first.
template <typename T>
Tensor<T> channel_stats(const Tensor<T>& x) {
    SD_CHECK(x.defined() && x.rank() == 4, "channel_stats: input must be B x C x H x W");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    SD_CHECK(C > 0, "channel_stats: empty channel axis");
    const long HW = long(H) * W;
    Tensor<T> out(Shape{B, 2, H, W});
    std::vector<int> argmax(size_t(B) * HW);
    for (int b = 0; b < B; ++b) {
        const T* xb = x.data() + long(b) * C * HW;
        T* avg = out.data() + long(b) * 2 * HW;
        T* mx = avg + HW;
        for (long p = 0; p < HW; ++p) {
            T s = T(0), best = xb[p];
            int bc = 0;
            for (int c = 0; c < C; ++c) {
                const T v = xb[c * HW + p];
                s += v;
                if (v > best) {
                    best = v;
                    bc = c;
                }
            }
            avg[p] = s / T(C);
            mx[p] = best;
            argmax[size_t(b) * HW + p] = bc;
        }
    }

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, B, C, HW, argmax](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
            for (int b = 0; b < B; ++b) {
                const T* gavg = g + long(b) * 2 * HW;
                const T* gmax = gavg + HW;
                T* d = dx + long(b) * C * HW;
                for (long p = 0; p < HW; ++p) {
                    const T share = gavg[p] / T(C);
                    for (int c = 0; c < C; ++c) d[c * HW + p] += share;
                    d[long(argmax[size_t(b) * HW + p]) * HW + p] += gmax[p];
                }
            }
        });
    }
    return out;
}

// Affine map y = x * W^T (+ bias). x: B x Cin, w: Cout x Cin.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    SD_CHECK(x.defined() && x.rank() == 2, "linear: input must be B x Cin");
    SD_CHECK(w.defined() && w.rank() == 2, "linear: weight must be Cout x Cin");
    const int B = x.dim(0), Cin = x.dim(1), Cout = w.dim(0);
    SD_CHECK(w.dim(1) == Cin, "linear: inner dimension mismatch: input has ", Cin,
             ", weight expects ", w.dim(1));
    if (bias.defined())
        SD_CHECK(bias.rank() == 1 && bias.dim(0) == Cout, "linear: bias must have ", Cout,
                 " entries");
    Tensor<T> out(Shape{B, Cout});
    if (B > 0 && Cout > 0) gemm_nt(x.data(), w.data(), out.data(), B, Cin, Cout);
    if (bias.defined())
        for (int b = 0; b < B; ++b)
            for (int o = 0; o < Cout; ++o) out.data()[long(b) * Cout + o] += bias.data()[o];

    if (detail::track<T>({&x, &w, &bias})) {
        auto xi = x.impl, wi = w.impl;
        auto bi = bias.defined() ? bias.impl : nullptr;
        detail::attach<T>(out, {x, w, bias}, [xi, wi, bi, B, Cin, Cout](TensorImpl<T>& self) {
            const T* g = self.grad_buf().data();
            if (xi->in_graph() && B > 0)
                gemm_nn(g, wi->v.data(), xi->grad_buf().data(), B, Cout, Cin, true);
            if (wi->in_graph() && B > 0)
                gemm_tn(g, xi->v.data(), wi->grad_buf().data(), Cout, B, Cin, true);
            if (bi && bi->in_graph()) {
                T* db = bi->grad_buf().data();
                for (int b = 0; b < B; ++b)
                    for (int o = 0; o < Cout; ++o) db[o] += g[long(b) * Cout + o];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
    SD_CHECK(x.defined() && x.rank() == 2, "transpose2d: input must be 2-D");
    const int N = x.dim(0), M = x.dim(1);
    Tensor<T> out(Shape{M, N});
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < M; ++j) out.data()[long(j) * N + i] = x.data()[long(i) * M + j];
    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, N, M](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
            for (int j = 0; j < M; ++j)
                for (int i = 0; i < N; ++i) dx[long(i) * M + j] += g[long(j) * N + i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    SD_CHECK(a.defined() && b.defined(), "add: undefined tensor");
    SD_CHECK(a.shape() == b.shape(), "add: shape mismatch ", shape_str(a.shape()), " vs ",
             shape_str(b.shape()));
    Tensor<T> out(a.shape());
    const long n = a.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (detail::track<T>({&a, &b})) {
        auto ai = a.impl, bi = b.impl;
        detail::attach<T>(out, {a, b}, [ai, bi, n](TensorImpl<T>& self) {
            const T* g = self.grad_buf().data();
            if (ai->in_graph()) {
                T* d = ai->grad_buf().data();
#pragma omp parallel for schedule(static) if (n > 65536)
                for (long i = 0; i < n; ++i) d[i] += g[i];
            }
            if (bi->in_graph()) {
                T* d = bi->grad_buf().data();
#pragma omp parallel for schedule(static) if (n > 65536)
                for (long i = 0; i < n; ++i) d[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    SD_CHECK(a.defined() && b.defined(), "mul: undefined tensor");
    SD_CHECK(a.shape() == b.shape(), "mul: shape mismatch ", shape_str(a.shape()), " vs ",
             shape_str(b.shape()));
    Tensor<T> out(a.shape());
    const long n = a.numel();
    for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (detail::track<T>({&a, &b})) {
        auto ai = a.impl, bi = b.impl;
        detail::attach<T>(out, {a, b}, [ai, bi, n](TensorImpl<T>& self) {
            const T* g = self.grad_buf().data();
            if (ai->in_graph()) {
                T* d = ai->grad_buf().data();
                for (long i = 0; i < n; ++i) d[i] += g[i] * bi->v[i];
            }
            if (bi->in_graph()) {
                T* d = bi->grad_buf().data();
                for (long i = 0; i < n; ++i) d[i] += g[i] * ai->v[i];
            }
        });
    }
    return out;
}

// y[b,c,h,w] = x[b,c,h,w] * gate[b,c]  (channel attention broadcast)
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& gate) {
    SD_CHECK(x.defined() && x.rank() == 4, "scale_channels: input must be B x C x H x W");
    SD_CHECK(gate.defined() && gate.rank() == 2 && gate.dim(0) == x.dim(0) &&
                 gate.dim(1) == x.dim(1),
             "scale_channels: gate must be B x C matching the input");
    const int B = x.dim(0), C = x.dim(1);
    const long HW = long(x.dim(2)) * x.dim(3);
    Tensor<T> out(x.shape());
#pragma omp parallel for schedule(static) if (long(B) * C > 8)
    for (long bc = 0; bc < long(B) * C; ++bc) {
        const T gv = gate.data()[bc];
        const T* p = x.data() + bc * HW;
        T* q = out.data() + bc * HW;
        for (long i = 0; i < HW; ++i) q[i] = p[i] * gv;
    }
    if (detail::track<T>({&x, &gate})) {
        auto xi = x.impl, gi = gate.impl;
        detail::attach<T>(out, {x, gate}, [xi, gi, B, C, HW](TensorImpl<T>& self) {
            const T* g = self.grad_buf().data();
            if (xi->in_graph()) {
                T* dx = xi->grad_buf().data();
                for (long bc = 0; bc < long(B) * C; ++bc) {
                    const T gv = gi->v[size_t(bc)];
                    for (long i = 0; i < HW; ++i) dx[bc * HW + i] += g[bc * HW + i] * gv;
                }
            }
            if (gi->in_graph()) {
                T* dg = gi->grad_buf().data();
                for (long bc = 0; bc < long(B) * C; ++bc) {
                    T acc = T(0);
                    const T* xv = xi->v.data() + bc * HW;
                    const T* gv = g + bc * HW;
                    for (long i = 0; i < HW; ++i) acc += gv[i] * xv[i];
                    dg[bc] += acc;
                }
            }
        });
    }
    return out;
}

// y[b,c,h,w] = x[b,c,h,w] * gate[b,0,h,w]  (spatial attention broadcast)
template <typename T>
Tensor<T> scale_spatial(const Tensor<T>& x, const Tensor<T>& gate) {
    SD_CHECK(x.defined() && x.rank() == 4, "scale_spatial: input must be B x C x H x W");
    SD_CHECK(gate.defined() && gate.rank() == 4 && gate.dim(0) == x.dim(0) && gate.dim(1) == 1 &&
                 gate.dim(2) == x.dim(2) && gate.dim(3) == x.dim(3),
             "scale_spatial: gate must be B x 1 x H x W matching the input");
    const int B = x.dim(0), C = x.dim(1);
    const long HW = long(x.dim(2)) * x.dim(3);
    Tensor<T> out(x.shape());
    for (int b = 0; b < B; ++b) {
        const T* gb = gate.data() + long(b) * HW;
        for (int c = 0; c < C; ++c) {
            const T* p = x.data() + (long(b) * C + c) * HW;
            T* q = out.data() + (long(b) * C + c) * HW;
            for (long i = 0; i < HW; ++i) q[i] = p[i] * gb[i];
        }
    }
    if (detail::track<T>({&x, &gate})) {
        auto xi = x.impl, gi = gate.impl;
        detail::attach<T>(out, {x, gate}, [xi, gi, B, C, HW](TensorImpl<T>& self) {
            const T* g = self.grad_buf().data();
            if (xi->in_graph()) {
                T* dx = xi->grad_buf().data();
                for (int b = 0; b < B; ++b) {
                    const T* gb = gi->v.data() + long(b) * HW;
                    for (int c = 0; c < C; ++c) {
                        const long off = (long(b) * C + c) * HW;
                        for (long i = 0; i < HW; ++i) dx[off + i] += g[off + i] * gb[i];
                    }
                }
            }
            if (gi->in_graph()) {
                T* dg = gi->grad_buf().data();
                for (int b = 0; b < B; ++b) {
                    for (int c = 0; c < C; ++c) {
                        const long off = (long(b) * C + c) * HW;
                        const T* xv = xi->v.data() + off;
                        for (long i = 0; i < HW; ++i) dg[long(b) * HW + i] += g[off + i] * xv[i];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    SD_CHECK(x.defined(), "sum_all: undefined tensor");
    T s = T(0);
    const long n = x.numel();
    for (long i = 0; i < n; ++i) s += x.data()[i];
    Tensor<T> out = Tensor<T>::scalar(s);
    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, n](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T g = self.grad_buf()[0];
            T* dx = xi->grad_buf().data();
            for (long i = 0; i < n; ++i) dx[i] += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T k) {
    SD_CHECK(x.defined(), "mul_scalar: undefined tensor");
    Tensor<T> out(x.shape());
    const long n = x.numel();
    for (long i = 0; i < n; ++i) out.data()[i] = x.data()[i] * k;
    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, n, k](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
            for (long i = 0; i < n; ++i) dx[i] += g[i] * k;
        });
    }
    return out;
}

// Bilinear read of per-pixel vectors at subpixel locations. Coordinates are
// (x, y) with pixel centers on the integer grid; callers must keep them in
// [0, W-1] x [0, H-1]. Output row n holds the interpolated channel vector of
// point n taken from batch element batch_index[n].
template <typename T>
Tensor<T> bilinear_gather(const Tensor<T>& x, const std::vector<int>& batch_index,
                          const std::vector<double>& px, const std::vector<double>& py) {
    SD_CHECK(x.defined() && x.rank() == 4, "bilinear_gather: input must be B x C x H x W");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const size_t N = px.size();
    SD_CHECK(py.size() == N && batch_index.size() == N,
             "bilinear_gather: coordinate array lengths differ");
    const long HW = long(H) * W;

    struct Tap {
        long base00, base01, base10, base11;
        T w00, w01, w10, w11;
    };
    std::vector<Tap> taps(N);
    for (size_t n = 0; n < N; ++n) {
        const int b = batch_index[n];
        SD_CHECK(b >= 0 && b < B, "bilinear_gather: batch index out of range at point ", n);
        SD_CHECK(px[n] >= 0.0 && px[n] <= W - 1 && py[n] >= 0.0 && py[n] <= H - 1,
                 "bilinear_gather: point ", n, " at (", px[n], ",", py[n],
                 ") outside [0,", W - 1, "]x[0,", H - 1, "]");
        const int x0 = int(std::floor(px[n])), y0 = int(std::floor(py[n]));
        const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        const T fx = T(px[n] - x0), fy = T(py[n] - y0);
        const long base = long(b) * C * HW;
        taps[n] = {base + long(y0) * W + x0, base + long(y0) * W + x1, base + long(y1) * W + x0,
                   base + long(y1) * W + x1,
                   (T(1) - fy) * (T(1) - fx), (T(1) - fy) * fx, fy * (T(1) - fx), fy * fx};
    }

    Tensor<T> out(Shape{int(N), C});
    for (size_t n = 0; n < N; ++n) {
        const auto& t = taps[n];
        T* row = out.data() + long(n) * C;
        const T* base = x.data();
        for (int c = 0; c < C; ++c) {
            const long co = long(c) * HW;
            row[c] = t.w00 * base[t.base00 + co] + t.w01 * base[t.base01 + co] +
                     t.w10 * base[t.base10 + co] + t.w11 * base[t.base11 + co];
        }
    }

    if (detail::track<T>({&x})) {
        auto xi = x.impl;
        detail::attach<T>(out, {x}, [xi, taps, C, HW, N](TensorImpl<T>& self) {
            if (!xi->in_graph()) return;
            const T* g = self.grad_buf().data();
            T* dx = xi->grad_buf().data();
            for (size_t n = 0; n < N; ++n) {
                const auto& t = taps[n];
                const T* row = g + long(n) * C;
                for (int c = 0; c < C; ++c) {
                    const long co = long(c) * HW;
                    dx[t.base00 + co] += t.w00 * row[c];
                    dx[t.base01 + co] += t.w01 * row[c];
                    dx[t.base10 + co] += t.w10 * row[c];
                    dx[t.base11 + co] += t.w11 * row[c];
                }
            }
        });
    }
    return out;
}

}  // namespace sandesc
