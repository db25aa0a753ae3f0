#pragma once

// W-shaped fully convolutional autoencoder with hand-written forward and
// reverse-mode passes. Two U-shaped halves: the encoder ends in a 1x1
// convolution plus per-pixel softmax producing a K-way soft segmentation,
// the decoder reads that field and reconstructs the input through a 1x1
// convolution with no output nonlinearity.
//
// Structure of one U (depth d pooling levels):
//   down modules 0..d, 2x2 max-pool between them, channels double per level;
//   up path: 2x2 stride-2 transposed convolution halving channels, channel
//   concatenation with the matching down module output, then an up module.
// Each module is two 3x3 same-padded convolutions, each followed by ReLU and
// (optionally) batch normalization; inverted dropout at the module output
// during training. All modules use depthwise-separable convolutions except
// the first and last module of each U.
//
// Everything is templated on the scalar type: float is the training default,
// double is used by the gradient-check tests. Layers cache what their own
// backward needs; backward overwrites parameter gradients.

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "wnet/common.hpp"
#include "wnet/tensor.hpp"

namespace wnet {

struct WNetConfig {
    int input_size = 64;
    int k = 8;
    int depth = 3;           // pooling levels per U
    int base_channels = 8;   // channels at the top level
    int in_channels = 3;
    bool separable = true;   // depthwise-separable pattern (all but first/last module per U)
    bool batch_norm = true;
    double dropout_p = 0.65;
    bool dropout_is_keep = false;  // alternate reading: dropout_p is the keep probability

    double drop_prob() const { return dropout_is_keep ? 1.0 - dropout_p : dropout_p; }
    int modules_per_u() const { return 2 * depth + 1; }
    int module_count() const { return 2 * modules_per_u(); }

    void validate() const {
        if (input_size <= 0 || depth < 1 || base_channels < 1 || k < 1 || in_channels < 1)
            throw ParamError("WNetConfig: sizes must be positive");
        if (input_size % (1 << depth) != 0)
            throw ParamError("WNetConfig: input_size " + std::to_string(input_size) +
                             " not divisible by 2^depth");
        double dp = drop_prob();
        if (dp < 0.0 || dp >= 1.0) throw ParamError("WNetConfig: drop probability outside [0,1)");
    }
};

template <typename S>
struct Tensor4 {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<S> v;  // (n, y, x, c) row-major

    Tensor4() = default;
    Tensor4(int n_, int h_, int w_, int c_)
        : n(n_), h(h_), w(w_), c(c_),
          v(static_cast<size_t>(n_) * h_ * w_ * c_, S(0)) {}

    S* px(int b, int y, int x) {
        return v.data() + ((static_cast<size_t>(b) * h + y) * w + x) * c;
    }
    const S* px(int b, int y, int x) const {
        return v.data() + ((static_cast<size_t>(b) * h + y) * w + x) * c;
    }
    size_t size() const { return v.size(); }
    void fill(S x) { std::fill(v.begin(), v.end(), x); }
    bool same_shape(const Tensor4& o) const {
        return n == o.n && h == o.h && w == o.w && c == o.c;
    }
};

namespace detail {
template <typename S>
void he_uniform(std::vector<S>& w, int fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / fan_in);
    for (auto& x : w) x = static_cast<S>(rng.uniform(-bound, bound));
}

#if defined(__GNUC__)
#define WNET_ALWAYS_INLINE inline __attribute__((always_inline))
#define WNET_VECTOR_KERNELS 1
#else
#define WNET_ALWAYS_INLINE inline
#endif

#ifdef WNET_VECTOR_KERNELS
// Explicit 8-wide float kernels for the channel dimension; everything else
// (double builds, odd channel counts, non-GNU compilers) takes the generic
// scalar path below.
typedef float v8f __attribute__((vector_size(32)));

WNET_ALWAYS_INLINE v8f v8f_splat(float v) { return v8f{v, v, v, v, v, v, v, v}; }
WNET_ALWAYS_INLINE v8f v8f_load(const float* p) {
    v8f v;
    __builtin_memcpy(&v, p, 32);
    return v;
}
WNET_ALWAYS_INLINE void v8f_store(float* p, v8f v) { __builtin_memcpy(p, &v, 32); }

template <int NV>
WNET_ALWAYS_INLINE void fma_rows_f8(const float* px, const float* wk, float* acc, int cin) {
    const int cout = 8 * NV;
    v8f a[NV];
    for (int k = 0; k < NV; ++k) a[k] = v8f_load(acc + 8 * k);
    int ci = 0;
    for (; ci + 2 <= cin; ci += 2) {
        v8f v0 = v8f_splat(px[ci]), v1 = v8f_splat(px[ci + 1]);
        const float* w0 = wk + static_cast<size_t>(ci) * cout;
        const float* w1 = w0 + cout;
        for (int k = 0; k < NV; ++k)
            a[k] += v0 * v8f_load(w0 + 8 * k) + v1 * v8f_load(w1 + 8 * k);
    }
    if (ci < cin) {
        v8f v0 = v8f_splat(px[ci]);
        const float* w0 = wk + static_cast<size_t>(ci) * cout;
        for (int k = 0; k < NV; ++k) a[k] += v0 * v8f_load(w0 + 8 * k);
    }
    for (int k = 0; k < NV; ++k) v8f_store(acc + 8 * k, a[k]);
}

template <int NV>
WNET_ALWAYS_INLINE void fma_outer_f8(const float* px, const float* dyp, float* gk, int cin) {
    const int cout = 8 * NV;
    v8f d[NV];
    for (int k = 0; k < NV; ++k) d[k] = v8f_load(dyp + 8 * k);
    for (int ci = 0; ci < cin; ++ci) {
        v8f v = v8f_splat(px[ci]);
        float* gr = gk + static_cast<size_t>(ci) * cout;
        for (int k = 0; k < NV; ++k) v8f_store(gr + 8 * k, v8f_load(gr + 8 * k) + v * d[k]);
    }
}
#endif  // WNET_VECTOR_KERNELS

// acc[co] += sum over ci of px[ci] * wk[ci][co]: the hot loop of every
// convolution here, in both directions (the input-gradient pass runs it
// with transposed weights).
template <typename S>
WNET_ALWAYS_INLINE void fma_rows(const S* __restrict px, const S* wk, S* __restrict acc,
                                 int cin, int cout) {
#ifdef WNET_VECTOR_KERNELS
    if constexpr (std::is_same_v<S, float>) {
        switch (cout) {
            case 8: fma_rows_f8<1>(px, wk, acc, cin); return;
            case 16: fma_rows_f8<2>(px, wk, acc, cin); return;
            case 32: fma_rows_f8<4>(px, wk, acc, cin); return;
            case 64: fma_rows_f8<8>(px, wk, acc, cin); return;
            default: break;
        }
    }
#endif
    int ci = 0;
    for (; ci + 4 <= cin; ci += 4) {
        S v0 = px[ci], v1 = px[ci + 1], v2 = px[ci + 2], v3 = px[ci + 3];
        const S* __restrict w0 = wk + static_cast<size_t>(ci) * cout;
        const S* __restrict w1 = w0 + cout;
        const S* __restrict w2 = w1 + cout;
        const S* __restrict w3 = w2 + cout;
        for (int co = 0; co < cout; ++co)
            acc[co] += v0 * w0[co] + v1 * w1[co] + v2 * w2[co] + v3 * w3[co];
    }
    for (; ci < cin; ++ci) {
        S v = px[ci];
        const S* __restrict wr = wk + static_cast<size_t>(ci) * cout;
        for (int co = 0; co < cout; ++co) acc[co] += v * wr[co];
    }
}

// gw[ci][co] += px[ci] * dy[co]: the outer-product half of a convolution
// backward at one tap. The dx half goes through fma_rows with transposed
// weights, keeping both passes in pure streaming-FMA form.
template <typename S>
WNET_ALWAYS_INLINE void fma_outer(const S* __restrict px, const S* __restrict dyp, S* gk,
                                  int cin, int cout) {
#ifdef WNET_VECTOR_KERNELS
    if constexpr (std::is_same_v<S, float>) {
        switch (cout) {
            case 8: fma_outer_f8<1>(px, dyp, gk, cin); return;
            case 16: fma_outer_f8<2>(px, dyp, gk, cin); return;
            case 32: fma_outer_f8<4>(px, dyp, gk, cin); return;
            case 64: fma_outer_f8<8>(px, dyp, gk, cin); return;
            default: break;
        }
    }
#endif
    int ci = 0;
    for (; ci + 2 <= cin; ci += 2) {
        S v0 = px[ci], v1 = px[ci + 1];
        S* __restrict g0 = gk + static_cast<size_t>(ci) * cout;
        S* __restrict g1 = g0 + cout;
        for (int co = 0; co < cout; ++co) {
            g0[co] += v0 * dyp[co];
            g1[co] += v1 * dyp[co];
        }
    }
    for (; ci < cin; ++ci) {
        S v = px[ci];
        S* __restrict gr = gk + static_cast<size_t>(ci) * cout;
        for (int co = 0; co < cout; ++co) gr[co] += v * dyp[co];
    }
}

// [tap][ci][co] -> [tap][co][ci]
template <typename S>
inline std::vector<S> transpose_taps(const std::vector<S>& w, int taps, int cin, int cout) {
    std::vector<S> wt(w.size());
    for (int t = 0; t < taps; ++t)
        for (int ci = 0; ci < cin; ++ci)
            for (int co = 0; co < cout; ++co)
                wt[(static_cast<size_t>(t) * cout + co) * cin + ci] =
                    w[(static_cast<size_t>(t) * cin + ci) * cout + co];
    return wt;
}
}  // namespace detail

// ---- layers -----------------------------------------------------------------

// 3x3 convolution, zero ("same") padding. Weights laid out [ky][kx][ci][co].
template <typename S>
struct Conv3x3 {
    int cin = 0, cout = 0;
    std::vector<S> w, b, gw, gb;
    Tensor4<S> x_cache;

    void init(int cin_, int cout_, Rng& rng) {
        cin = cin_;
        cout = cout_;
        w.assign(static_cast<size_t>(9) * cin * cout, S(0));
        b.assign(cout, S(0));
        gw.assign(w.size(), S(0));
        gb.assign(b.size(), S(0));
        detail::he_uniform(w, 9 * cin, rng);
    }

    Tensor4<S> forward(const Tensor4<S>& x) {
        x_cache = x;
        Tensor4<S> y(x.n, x.h, x.w, cout);
        std::vector<S> acc(cout);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    S* __restrict a = acc.data();
                    for (int co = 0; co < cout; ++co) a[co] = b[co];
                    for (int ky = 0; ky < 3; ++ky) {
                        int sy = yy + ky - 1;
                        if (sy < 0 || sy >= x.h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            int sx = xx + kx - 1;
                            if (sx < 0 || sx >= x.w) continue;
                            detail::fma_rows(x.px(bb, sy, sx),
                                             w.data() + (static_cast<size_t>(ky) * 3 + kx) * cin * cout,
                                             a, cin, cout);
                        }
                    }
                    std::memcpy(y.px(bb, yy, xx), acc.data(), sizeof(S) * cout);
                }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        const Tensor4<S>& x = x_cache;
        Tensor4<S> dx(x.n, x.h, x.w, cin);
        std::fill(gw.begin(), gw.end(), S(0));
        std::fill(gb.begin(), gb.end(), S(0));
        std::vector<S> wt = detail::transpose_taps(w, 9, cin, cout);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    const S* __restrict dyp = dy.px(bb, yy, xx);
                    for (int co = 0; co < cout; ++co) gb[co] += dyp[co];
                    for (int ky = 0; ky < 3; ++ky) {
                        int sy = yy + ky - 1;
                        if (sy < 0 || sy >= x.h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            int sx = xx + kx - 1;
                            if (sx < 0 || sx >= x.w) continue;
                            const size_t tap = static_cast<size_t>(ky) * 3 + kx;
                            detail::fma_outer(x.px(bb, sy, sx), dyp, gw.data() + tap * cin * cout,
                                              cin, cout);
                            detail::fma_rows(dyp, wt.data() + tap * cin * cout,
                                             dx.px(bb, sy, sx), cout, cin);
                        }
                    }
                }
        return dx;
    }

    int weight_count() const { return 9 * cin * cout; }
};

// Depthwise 3x3 (no bias) followed by a pointwise 1x1 projection with bias.
template <typename S>
struct SepConv3x3 {
    int cin = 0, cout = 0;
    std::vector<S> dw, pw, b, gdw, gpw, gb;  // dw[ky][kx][c], pw[ci][co]
    Tensor4<S> x_cache, mid_cache;

    void init(int cin_, int cout_, Rng& rng) {
        cin = cin_;
        cout = cout_;
        dw.assign(static_cast<size_t>(9) * cin, S(0));
        pw.assign(static_cast<size_t>(cin) * cout, S(0));
        b.assign(cout, S(0));
        gdw.assign(dw.size(), S(0));
        gpw.assign(pw.size(), S(0));
        gb.assign(b.size(), S(0));
        detail::he_uniform(dw, 9, rng);
        detail::he_uniform(pw, cin, rng);
    }

    Tensor4<S> forward(const Tensor4<S>& x) {
        x_cache = x;
        Tensor4<S> mid(x.n, x.h, x.w, cin);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    S* __restrict mp = mid.px(bb, yy, xx);
                    for (int ky = 0; ky < 3; ++ky) {
                        int sy = yy + ky - 1;
                        if (sy < 0 || sy >= x.h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            int sx = xx + kx - 1;
                            if (sx < 0 || sx >= x.w) continue;
                            const S* __restrict px = x.px(bb, sy, sx);
                            const S* __restrict kk =
                                dw.data() + (static_cast<size_t>(ky) * 3 + kx) * cin;
                            for (int ci = 0; ci < cin; ++ci) mp[ci] += px[ci] * kk[ci];
                        }
                    }
                }
        mid_cache = mid;
        Tensor4<S> y(x.n, x.h, x.w, cout);
        std::vector<S> acc(cout);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    S* __restrict a = acc.data();
                    for (int co = 0; co < cout; ++co) a[co] = b[co];
                    detail::fma_rows(mid.px(bb, yy, xx), pw.data(), a, cin, cout);
                    std::memcpy(y.px(bb, yy, xx), acc.data(), sizeof(S) * cout);
                }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        const Tensor4<S>& x = x_cache;
        std::fill(gdw.begin(), gdw.end(), S(0));
        std::fill(gpw.begin(), gpw.end(), S(0));
        std::fill(gb.begin(), gb.end(), S(0));
        std::vector<S> pwt = detail::transpose_taps(pw, 1, cin, cout);
        Tensor4<S> dmid(x.n, x.h, x.w, cin);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    const S* __restrict dyp = dy.px(bb, yy, xx);
                    for (int co = 0; co < cout; ++co) gb[co] += dyp[co];
                    detail::fma_outer(mid_cache.px(bb, yy, xx), dyp, gpw.data(), cin, cout);
                    detail::fma_rows(dyp, pwt.data(), dmid.px(bb, yy, xx), cout, cin);
                }
        Tensor4<S> dx(x.n, x.h, x.w, cin);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    const S* __restrict dm = dmid.px(bb, yy, xx);
                    for (int ky = 0; ky < 3; ++ky) {
                        int sy = yy + ky - 1;
                        if (sy < 0 || sy >= x.h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            int sx = xx + kx - 1;
                            if (sx < 0 || sx >= x.w) continue;
                            const S* __restrict px = x.px(bb, sy, sx);
                            S* __restrict dxp = dx.px(bb, sy, sx);
                            size_t off = (static_cast<size_t>(ky) * 3 + kx) * cin;
                            const S* __restrict kk = dw.data() + off;
                            S* __restrict gk = gdw.data() + off;
                            for (int ci = 0; ci < cin; ++ci) {
                                gk[ci] += px[ci] * dm[ci];
                                dxp[ci] += kk[ci] * dm[ci];
                            }
                        }
                    }
                }
        return dx;
    }

    int weight_count() const { return 9 * cin + cin * cout; }
};

template <typename S>
struct Conv1x1 {
    int cin = 0, cout = 0;
    std::vector<S> w, b, gw, gb;  // w[ci][co]
    Tensor4<S> x_cache;

    void init(int cin_, int cout_, Rng& rng) {
        cin = cin_;
        cout = cout_;
        w.assign(static_cast<size_t>(cin) * cout, S(0));
        b.assign(cout, S(0));
        gw.assign(w.size(), S(0));
        gb.assign(b.size(), S(0));
        detail::he_uniform(w, cin, rng);
    }

    Tensor4<S> forward(const Tensor4<S>& x) {
        x_cache = x;
        Tensor4<S> y(x.n, x.h, x.w, cout);
        const int pix = x.n * x.h * x.w;
        for (int i = 0; i < pix; ++i) {
            S* __restrict yp = y.v.data() + static_cast<size_t>(i) * cout;
            for (int co = 0; co < cout; ++co) yp[co] = b[co];
            detail::fma_rows(x.v.data() + static_cast<size_t>(i) * cin, w.data(), yp, cin, cout);
        }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        const Tensor4<S>& x = x_cache;
        Tensor4<S> dx(x.n, x.h, x.w, cin);
        std::fill(gw.begin(), gw.end(), S(0));
        std::fill(gb.begin(), gb.end(), S(0));
        const int pix = x.n * x.h * x.w;
        std::vector<S> wt = detail::transpose_taps(w, 1, cin, cout);
        for (int i = 0; i < pix; ++i) {
            const S* __restrict dyp = dy.v.data() + static_cast<size_t>(i) * cout;
            for (int co = 0; co < cout; ++co) gb[co] += dyp[co];
            detail::fma_outer(x.v.data() + static_cast<size_t>(i) * cin, dyp, gw.data(), cin,
                              cout);
            detail::fma_rows(dyp, wt.data(), dx.v.data() + static_cast<size_t>(i) * cin, cout,
                             cin);
        }
        return dx;
    }

    int weight_count() const { return cin * cout; }
};

// 2x2 stride-2 transposed convolution (non-overlapping: each output pixel is
// produced by exactly one input pixel). Weights [dy][dx][ci][co].
template <typename S>
struct TConv2x2 {
    int cin = 0, cout = 0;
    std::vector<S> w, b, gw, gb;
    Tensor4<S> x_cache;

    void init(int cin_, int cout_, Rng& rng) {
        cin = cin_;
        cout = cout_;
        w.assign(static_cast<size_t>(4) * cin * cout, S(0));
        b.assign(cout, S(0));
        gw.assign(w.size(), S(0));
        gb.assign(b.size(), S(0));
        detail::he_uniform(w, cin, rng);
    }

    Tensor4<S> forward(const Tensor4<S>& x) {
        x_cache = x;
        Tensor4<S> y(x.n, x.h * 2, x.w * 2, cout);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    const S* px = x.px(bb, yy, xx);
                    for (int dy2 = 0; dy2 < 2; ++dy2)
                        for (int dx2 = 0; dx2 < 2; ++dx2) {
                            S* __restrict yp = y.px(bb, 2 * yy + dy2, 2 * xx + dx2);
                            for (int co = 0; co < cout; ++co) yp[co] = b[co];
                            detail::fma_rows(
                                px, w.data() + (static_cast<size_t>(dy2) * 2 + dx2) * cin * cout,
                                yp, cin, cout);
                        }
                }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        const Tensor4<S>& x = x_cache;
        Tensor4<S> dx(x.n, x.h, x.w, cin);
        std::fill(gw.begin(), gw.end(), S(0));
        std::fill(gb.begin(), gb.end(), S(0));
        std::vector<S> wt = detail::transpose_taps(w, 4, cin, cout);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    const S* px = x.px(bb, yy, xx);
                    S* dxp = dx.px(bb, yy, xx);
                    for (int dy2 = 0; dy2 < 2; ++dy2)
                        for (int dx2 = 0; dx2 < 2; ++dx2) {
                            const S* __restrict dyp = dy.px(bb, 2 * yy + dy2, 2 * xx + dx2);
                            size_t off = (static_cast<size_t>(dy2) * 2 + dx2) * cin * cout;
                            for (int co = 0; co < cout; ++co) gb[co] += dyp[co];
                            detail::fma_outer(px, dyp, gw.data() + off, cin, cout);
                            detail::fma_rows(dyp, wt.data() + off, dxp, cout, cin);
                        }
                }
        return dx;
    }

    int weight_count() const { return 4 * cin * cout; }
};

// Per-channel batch normalization over (batch, y, x). Training uses batch
// statistics (biased variance) and updates running averages with momentum
// 0.9; inference and single-sample batches use the running statistics.
template <typename S>
struct BatchNorm2d {
    int c = 0;
    double eps = 1e-5, momentum = 0.9;
    std::vector<S> gamma, beta, ggamma, gbeta;
    std::vector<S> run_mean, run_var;
    // caches
    Tensor4<S> xhat;
    std::vector<S> invstd;
    bool used_batch_stats = false;

    void init(int c_) {
        c = c_;
        gamma.assign(c, S(1));
        beta.assign(c, S(0));
        ggamma.assign(c, S(0));
        gbeta.assign(c, S(0));
        run_mean.assign(c, S(0));
        run_var.assign(c, S(1));
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool train) {
        const size_t m = static_cast<size_t>(x.n) * x.h * x.w;
        used_batch_stats = train && x.n > 1;
        std::vector<S> mean(c), var(c);
        if (used_batch_stats) {
            std::vector<double> sum(c, 0.0), sq(c, 0.0);
            for (size_t i = 0; i < m; ++i) {
                const S* px = x.v.data() + i * c;
                for (int ch = 0; ch < c; ++ch) {
                    sum[ch] += px[ch];
                    sq[ch] += static_cast<double>(px[ch]) * px[ch];
                }
            }
            for (int ch = 0; ch < c; ++ch) {
                double mu = sum[ch] / static_cast<double>(m);
                double va = sq[ch] / static_cast<double>(m) - mu * mu;
                if (va < 0) va = 0;
                mean[ch] = static_cast<S>(mu);
                var[ch] = static_cast<S>(va);
                run_mean[ch] = static_cast<S>(momentum * run_mean[ch] + (1 - momentum) * mu);
                run_var[ch] = static_cast<S>(momentum * run_var[ch] + (1 - momentum) * va);
            }
        } else {
            mean = run_mean;
            var = run_var;
        }
        invstd.resize(c);
        for (int ch = 0; ch < c; ++ch)
            invstd[ch] = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var[ch]) + eps));
        xhat = Tensor4<S>(x.n, x.h, x.w, c);
        Tensor4<S> y(x.n, x.h, x.w, c);
        for (size_t i = 0; i < m; ++i) {
            const S* px = x.v.data() + i * c;
            S* hx = xhat.v.data() + i * c;
            S* yp = y.v.data() + i * c;
            for (int ch = 0; ch < c; ++ch) {
                hx[ch] = (px[ch] - mean[ch]) * invstd[ch];
                yp[ch] = gamma[ch] * hx[ch] + beta[ch];
            }
        }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        const size_t m = static_cast<size_t>(dy.n) * dy.h * dy.w;
        std::fill(ggamma.begin(), ggamma.end(), S(0));
        std::fill(gbeta.begin(), gbeta.end(), S(0));
        for (size_t i = 0; i < m; ++i) {
            const S* dyp = dy.v.data() + i * c;
            const S* hx = xhat.v.data() + i * c;
            for (int ch = 0; ch < c; ++ch) {
                ggamma[ch] += dyp[ch] * hx[ch];
                gbeta[ch] += dyp[ch];
            }
        }
        Tensor4<S> dx(dy.n, dy.h, dy.w, c);
        if (used_batch_stats) {
            const S invm = static_cast<S>(1.0 / static_cast<double>(m));
            for (size_t i = 0; i < m; ++i) {
                const S* dyp = dy.v.data() + i * c;
                const S* hx = xhat.v.data() + i * c;
                S* dxp = dx.v.data() + i * c;
                for (int ch = 0; ch < c; ++ch)
                    dxp[ch] = gamma[ch] * invstd[ch] * invm *
                              (static_cast<S>(m) * dyp[ch] - gbeta[ch] - hx[ch] * ggamma[ch]);
            }
        } else {
            for (size_t i = 0; i < m; ++i) {
                const S* dyp = dy.v.data() + i * c;
                S* dxp = dx.v.data() + i * c;
                for (int ch = 0; ch < c; ++ch) dxp[ch] = dyp[ch] * gamma[ch] * invstd[ch];
            }
        }
        return dx;
    }
};

// ReLU with cached sign mask.
template <typename S>
struct Relu {
    std::vector<uint8_t> mask;

    Tensor4<S> forward(const Tensor4<S>& x) {
        mask.assign(x.size(), 0);
        Tensor4<S> y = x;
        for (size_t i = 0; i < y.size(); ++i) {
            if (y.v[i] > S(0))
                mask[i] = 1;
            else
                y.v[i] = S(0);
        }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        Tensor4<S> dx = dy;
        for (size_t i = 0; i < dx.size(); ++i)
            if (!mask[i]) dx.v[i] = S(0);
        return dx;
    }
};

// 2x2 stride-2 max pooling; ties go to the first maximal element in
// row-major window order so the backward route is deterministic.
template <typename S>
struct MaxPool2x2 {
    std::vector<int> arg;  // flat input index per output element
    int in_h = 0, in_w = 0, in_c = 0, in_n = 0;

    Tensor4<S> forward(const Tensor4<S>& x) {
        in_n = x.n;
        in_h = x.h;
        in_w = x.w;
        in_c = x.c;
        Tensor4<S> y(x.n, x.h / 2, x.w / 2, x.c);
        arg.assign(y.size(), 0);
        for (int bb = 0; bb < x.n; ++bb)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx) {
                    S* yp = y.px(bb, yy, xx);
                    int* ap = arg.data() +
                              ((static_cast<size_t>(bb) * y.h + yy) * y.w + xx) * x.c;
                    for (int dy2 = 0; dy2 < 2; ++dy2)
                        for (int dx2 = 0; dx2 < 2; ++dx2) {
                            const int sy = 2 * yy + dy2, sx = 2 * xx + dx2;
                            const S* px = x.px(bb, sy, sx);
                            size_t base = ((static_cast<size_t>(bb) * x.h + sy) * x.w + sx) * x.c;
                            for (int ch = 0; ch < x.c; ++ch) {
                                if (dy2 == 0 && dx2 == 0) {
                                    yp[ch] = px[ch];
                                    ap[ch] = static_cast<int>(base) + ch;
                                } else if (px[ch] > yp[ch]) {
                                    yp[ch] = px[ch];
                                    ap[ch] = static_cast<int>(base) + ch;
                                }
                            }
                        }
                }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        Tensor4<S> dx(in_n, in_h, in_w, in_c);
        for (size_t i = 0; i < dy.size(); ++i) dx.v[arg[i]] += dy.v[i];
        return dx;
    }
};

// Inverted dropout: kept activations are scaled by 1/keep during training,
// inference is the identity.
template <typename S>
struct Dropout {
    std::vector<S> scale;

    Tensor4<S> forward(const Tensor4<S>& x, double drop_prob, bool train, Rng* rng) {
        if (!train || drop_prob <= 0.0) {
            scale.clear();
            return x;
        }
        const S keep_inv = static_cast<S>(1.0 / (1.0 - drop_prob));
        scale.assign(x.size(), S(0));
        Tensor4<S> y = x;
        for (size_t i = 0; i < y.size(); ++i) {
            if (rng->next_double() >= drop_prob) {
                scale[i] = keep_inv;
                y.v[i] *= keep_inv;
            } else {
                y.v[i] = S(0);
            }
        }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        if (scale.empty()) return dy;
        Tensor4<S> dx = dy;
        for (size_t i = 0; i < dx.size(); ++i) dx.v[i] *= scale[i];
        return dx;
    }
};

// One "convolutional layer" of a module: dense or depthwise-separable.
template <typename S>
struct ConvUnit {
    bool separable = false;
    Conv3x3<S> dense;
    SepConv3x3<S> sep;

    void init(int cin, int cout, bool sep_, Rng& rng) {
        separable = sep_;
        if (separable)
            sep.init(cin, cout, rng);
        else
            dense.init(cin, cout, rng);
    }
    Tensor4<S> forward(const Tensor4<S>& x) {
        return separable ? sep.forward(x) : dense.forward(x);
    }
    Tensor4<S> backward(const Tensor4<S>& dy) {
        return separable ? sep.backward(dy) : dense.backward(dy);
    }
    int weight_count() const { return separable ? sep.weight_count() : dense.weight_count(); }
};

// conv -> ReLU -> BN, twice, then dropout at the module output.
template <typename S>
struct ModuleBlock {
    ConvUnit<S> conv1, conv2;
    Relu<S> relu1, relu2;
    BatchNorm2d<S> bn1, bn2;
    Dropout<S> drop;
    bool use_bn = true;
    double drop_prob = 0.0;

    void init(int cin, int cout, bool separable, bool bn, double dp, Rng& rng) {
        use_bn = bn;
        drop_prob = dp;
        conv1.init(cin, cout, separable, rng);
        conv2.init(cout, cout, separable, rng);
        bn1.init(cout);
        bn2.init(cout);
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng* rng) {
        Tensor4<S> t = relu1.forward(conv1.forward(x));
        if (use_bn) t = bn1.forward(t, train);
        t = relu2.forward(conv2.forward(t));
        if (use_bn) t = bn2.forward(t, train);
        return drop.forward(t, drop_prob, train, rng);
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        Tensor4<S> d = drop.backward(dy);
        if (use_bn) d = bn2.backward(d);
        d = conv2.backward(relu2.backward(d));
        if (use_bn) d = bn1.backward(d);
        return conv1.backward(relu1.backward(d));
    }
};

// ---- helpers ----------------------------------------------------------------

template <typename S>
Tensor4<S> concat_channels(const Tensor4<S>& a, const Tensor4<S>& b) {
    Tensor4<S> y(a.n, a.h, a.w, a.c + b.c);
    const int pix = a.n * a.h * a.w;
    for (int i = 0; i < pix; ++i) {
        std::memcpy(y.v.data() + static_cast<size_t>(i) * y.c,
                    a.v.data() + static_cast<size_t>(i) * a.c, sizeof(S) * a.c);
        std::memcpy(y.v.data() + static_cast<size_t>(i) * y.c + a.c,
                    b.v.data() + static_cast<size_t>(i) * b.c, sizeof(S) * b.c);
    }
    return y;
}

template <typename S>
void split_channels(const Tensor4<S>& d, int ca, Tensor4<S>& da, Tensor4<S>& db) {
    da = Tensor4<S>(d.n, d.h, d.w, ca);
    db = Tensor4<S>(d.n, d.h, d.w, d.c - ca);
    const int pix = d.n * d.h * d.w;
    for (int i = 0; i < pix; ++i) {
        std::memcpy(da.v.data() + static_cast<size_t>(i) * ca,
                    d.v.data() + static_cast<size_t>(i) * d.c, sizeof(S) * ca);
        std::memcpy(db.v.data() + static_cast<size_t>(i) * db.c,
                    d.v.data() + static_cast<size_t>(i) * d.c + ca, sizeof(S) * db.c);
    }
}

// Per-pixel stable softmax over channels.
template <typename S>
Tensor4<S> softmax_channels(const Tensor4<S>& z) {
    Tensor4<S> p = z;
    const int pix = z.n * z.h * z.w;
    for (int i = 0; i < pix; ++i) {
        S* px = p.v.data() + static_cast<size_t>(i) * z.c;
        S m = px[0];
        for (int ch = 1; ch < z.c; ++ch) m = std::max(m, px[ch]);
        S sum = S(0);
        for (int ch = 0; ch < z.c; ++ch) {
            px[ch] = std::exp(px[ch] - m);
            sum += px[ch];
        }
        for (int ch = 0; ch < z.c; ++ch) px[ch] /= sum;
    }
    return p;
}

// dz = p * (dp - <p, dp>) per pixel.
template <typename S>
Tensor4<S> softmax_backward(const Tensor4<S>& p, const Tensor4<S>& dp) {
    Tensor4<S> dz(p.n, p.h, p.w, p.c);
    const int pix = p.n * p.h * p.w;
    for (int i = 0; i < pix; ++i) {
        const S* pp = p.v.data() + static_cast<size_t>(i) * p.c;
        const S* dpp = dp.v.data() + static_cast<size_t>(i) * p.c;
        S* dzp = dz.v.data() + static_cast<size_t>(i) * p.c;
        S dot = S(0);
        for (int ch = 0; ch < p.c; ++ch) dot += pp[ch] * dpp[ch];
        for (int ch = 0; ch < p.c; ++ch) dzp[ch] = pp[ch] * (dpp[ch] - dot);
    }
    return dz;
}

// ---- one U ------------------------------------------------------------------

template <typename S>
struct UNet {
    int depth = 0;
    std::vector<ModuleBlock<S>> down;  // depth+1 modules
    std::vector<MaxPool2x2<S>> pools;  // depth
    std::vector<TConv2x2<S>> ups;      // depth, bottom to top
    std::vector<ModuleBlock<S>> up;    // depth, bottom to top
    std::vector<Tensor4<S>> skips;     // forward caches
    std::vector<int> skip_channels;

    // `first_module_index` is the 1-based index of this U's first module in
    // the whole network, used to select the dense/separable pattern.
    void init(const WNetConfig& cfg, int cin, Rng& rng) {
        depth = cfg.depth;
        down.resize(depth + 1);
        pools.resize(depth);
        ups.resize(depth);
        up.resize(depth);
        const int mpu = cfg.modules_per_u();
        auto sep_for = [&](int local_module) {  // 0-based within this U
            if (!cfg.separable) return false;
            return local_module != 0 && local_module != mpu - 1;
        };
        int module = 0;
        for (int i = 0; i <= depth; ++i, ++module) {
            int ci = i == 0 ? cin : cfg.base_channels << (i - 1);
            int co = cfg.base_channels << i;
            down[i].init(ci, co, sep_for(module), cfg.batch_norm, cfg.drop_prob(), rng);
        }
        for (int i = depth - 1; i >= 0; --i, ++module) {
            int hi = cfg.base_channels << (i + 1);
            int lo = cfg.base_channels << i;
            ups[i].init(hi, lo, rng);
            up[i].init(2 * lo, lo, sep_for(module), cfg.batch_norm, cfg.drop_prob(), rng);
        }
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng* rng) {
        skips.assign(depth, Tensor4<S>());
        Tensor4<S> t = x;
        for (int i = 0; i <= depth; ++i) {
            t = down[i].forward(t, train, rng);
            if (i < depth) {
                skips[i] = t;
                t = pools[i].forward(t);
            }
        }
        skip_channels.assign(depth, 0);
        for (int i = depth - 1; i >= 0; --i) {
            t = ups[i].forward(t);
            skip_channels[i] = skips[i].c;
            t = concat_channels(skips[i], t);
            t = up[i].forward(t, train, rng);
        }
        return t;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) {
        std::vector<Tensor4<S>> dskips(depth);
        Tensor4<S> d = dy;
        for (int i = 0; i < depth; ++i) {
            d = up[i].backward(d);
            Tensor4<S> dskip, dup;
            split_channels(d, skip_channels[i], dskip, dup);
            dskips[i] = std::move(dskip);
            d = ups[i].backward(dup);
        }
        for (int i = depth; i >= 0; --i) {
            if (i < depth) {
                d = pools[i].backward(d);
                for (size_t j = 0; j < d.size(); ++j) d.v[j] += dskips[i].v[j];
            }
            d = down[i].backward(d);
        }
        return d;
    }
};

enum class ParamPart { Encoder, Decoder, All };

// ---- the full network ---------------------------------------------------------

template <typename S>
class WNetModel {
public:
    WNetConfig cfg;
    UNet<S> enc_u, dec_u;
    Conv1x1<S> enc_head, dec_head;
    Tensor4<S> p_cache;  // softmax output of the last encode

    void build(const WNetConfig& config, Rng& rng) {
        config.validate();
        cfg = config;
        enc_u.init(cfg, cfg.in_channels, rng);
        enc_head.init(cfg.base_channels, cfg.k, rng);
        dec_u.init(cfg, cfg.k, rng);
        dec_head.init(cfg.base_channels, cfg.in_channels, rng);
    }

    void check_input(const Tensor4<S>& x) const {
        if (x.h != cfg.input_size || x.w != cfg.input_size || x.c != cfg.in_channels)
            throw DataError("WNet: input " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                            "x" + std::to_string(x.c) + " does not match configured " +
                            std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size) +
                            "x" + std::to_string(cfg.in_channels));
    }

    Tensor4<S> forward_encode(const Tensor4<S>& x, bool train, Rng* rng) {
        check_input(x);
        Tensor4<S> t = enc_u.forward(x, train, rng);
        t = enc_head.forward(t);
        p_cache = softmax_channels(t);
        return p_cache;
    }

    // Backward from a gradient w.r.t. the softmax output.
    void backward_encode(const Tensor4<S>& dp) {
        Tensor4<S> dz = softmax_backward(p_cache, dp);
        enc_u.backward(enc_head.backward(dz));
    }

    Tensor4<S> forward_decode(const Tensor4<S>& p, bool train, Rng* rng) {
        Tensor4<S> t = dec_u.forward(p, train, rng);
        return dec_head.forward(t);
    }

    // Backward through the decoder; returns the gradient w.r.t. p.
    Tensor4<S> backward_decode(const Tensor4<S>& drecon) {
        return dec_u.backward(dec_head.backward(drecon));
    }

    // Full autoencoder pass for the reconstruction loss.
    Tensor4<S> forward_full(const Tensor4<S>& x, bool train, Rng* rng) {
        Tensor4<S> p = forward_encode(x, train, rng);
        return forward_decode(p, train, rng);
    }

    void backward_full(const Tensor4<S>& drecon) {
        Tensor4<S> dp = backward_decode(drecon);
        backward_encode(dp);
    }

    // Trainable parameters in a fixed order; fn(values, grads).
    template <typename F>
    void visit_params(ParamPart part, F&& fn) {
        auto unet = [&](UNet<S>& u) {
            for (auto& m : u.down) visit_module(m, fn);
            for (int i = static_cast<int>(u.ups.size()) - 1; i >= 0; --i) {
                fn(u.ups[i].w, u.ups[i].gw);
                fn(u.ups[i].b, u.ups[i].gb);
                visit_module(u.up[i], fn);
            }
        };
        if (part != ParamPart::Decoder) {
            unet(enc_u);
            fn(enc_head.w, enc_head.gw);
            fn(enc_head.b, enc_head.gb);
        }
        if (part != ParamPart::Encoder) {
            unet(dec_u);
            fn(dec_head.w, dec_head.gw);
            fn(dec_head.b, dec_head.gb);
        }
    }

    // Trainable parameters plus batch-norm running statistics, fixed order;
    // fn(values). Used for serialization and bit-exact comparisons.
    template <typename F>
    void visit_state(ParamPart part, F&& fn) {
        visit_params(part, [&](std::vector<S>& w, std::vector<S>&) { fn(w); });
        auto stats = [&](UNet<S>& u) {
            for (auto& m : u.down) {
                fn(m.bn1.run_mean);
                fn(m.bn1.run_var);
                fn(m.bn2.run_mean);
                fn(m.bn2.run_var);
            }
            for (auto& m : u.up) {
                fn(m.bn1.run_mean);
                fn(m.bn1.run_var);
                fn(m.bn2.run_mean);
                fn(m.bn2.run_var);
            }
        };
        if (part != ParamPart::Decoder) stats(enc_u);
        if (part != ParamPart::Encoder) stats(dec_u);
    }

    void sgd_step(ParamPart part, double lr) {
        visit_params(part, [&](std::vector<S>& w, std::vector<S>& g) {
            for (size_t i = 0; i < w.size(); ++i) w[i] -= static_cast<S>(lr) * g[i];
        });
    }

    // One entry per convolutional layer (a separable unit counts once), plus
    // the transposed convolutions and the two 1x1 heads.
    int conv_layer_count() const {
        auto unet = [&](const UNet<S>& u) {
            return 2 * static_cast<int>(u.down.size() + u.up.size()) +
                   static_cast<int>(u.ups.size());
        };
        return unet(enc_u) + unet(dec_u) + 2;
    }

    size_t param_count() {
        size_t total = 0;
        visit_params(ParamPart::All,
                     [&](std::vector<S>& w, std::vector<S>&) { total += w.size(); });
        return total;
    }

private:
    template <typename F>
    static void visit_conv_unit(ConvUnit<S>& u, F&& fn) {
        if (u.separable) {
            fn(u.sep.dw, u.sep.gdw);
            fn(u.sep.pw, u.sep.gpw);
            fn(u.sep.b, u.sep.gb);
        } else {
            fn(u.dense.w, u.dense.gw);
            fn(u.dense.b, u.dense.gb);
        }
    }
    template <typename F>
    static void visit_module(ModuleBlock<S>& m, F&& fn) {
        visit_conv_unit(m.conv1, fn);
        fn(m.bn1.gamma, m.bn1.ggamma);
        fn(m.bn1.beta, m.bn1.gbeta);
        visit_conv_unit(m.conv2, fn);
        fn(m.bn2.gamma, m.bn2.ggamma);
        fn(m.bn2.beta, m.bn2.gbeta);
    }
};

// ---- conversions ---------------------------------------------------------------

template <typename S>
Tensor4<S> image_to_tensor(const ImageTensor& img) {
    Tensor4<S> t(1, img.height, img.width, img.channels);
    for (size_t i = 0; i < img.data.size(); ++i) t.v[i] = static_cast<S>(img.data[i]);
    return t;
}

template <typename S>
SoftSegmentation tensor_to_soft_seg(const Tensor4<S>& p, int batch_index) {
    SoftSegmentation s(p.h, p.w, p.c);
    const size_t per = static_cast<size_t>(p.h) * p.w * p.c;
    for (size_t i = 0; i < per; ++i)
        s.probs[i] = static_cast<double>(p.v[batch_index * per + i]);
    return s;
}

template <typename S>
ImageTensor tensor_to_image(const Tensor4<S>& t, int batch_index) {
    ImageTensor img(t.h, t.w, t.c);
    const size_t per = static_cast<size_t>(t.h) * t.w * t.c;
    for (size_t i = 0; i < per; ++i)
        img.data[i] = static_cast<double>(t.v[batch_index * per + i]);
    return img;
}

}  // namespace wnet
