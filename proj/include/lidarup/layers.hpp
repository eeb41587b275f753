#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/rng.hpp"
#include "lidarup/tensor.hpp"

namespace lidarup {

template <class T>
struct ParamRef {
    std::string name;
    std::vector<T>* value;
    std::vector<T>* grad;
};

// Fixed-order 8-lane dot product: lane k sums indices congruent to k mod 8,
// lanes combine pairwise. The order never depends on runtime conditions, so
// results are reproducible while the loop still vectorizes.
template <class T>
inline T dot_lanes(const T* a, const T* b, int n) {
    T l0{}, l1{}, l2{}, l3{}, l4{}, l5{}, l6{}, l7{};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        l0 += a[i] * b[i];
        l1 += a[i + 1] * b[i + 1];
        l2 += a[i + 2] * b[i + 2];
        l3 += a[i + 3] * b[i + 3];
        l4 += a[i + 4] * b[i + 4];
        l5 += a[i + 5] * b[i + 5];
        l6 += a[i + 6] * b[i + 6];
        l7 += a[i + 7] * b[i + 7];
    }
    T tail{};
    for (; i < n; ++i) tail += a[i] * b[i];
    return (((l0 + l1) + (l2 + l3)) + ((l4 + l5) + (l6 + l7))) + tail;
}

// One fused pass accumulating the three kernel-column dots of a row pair:
// a0 += sum_c g[c]*x[c-1], a1 += sum_c g[c]*x[c], a2 += sum_c g[c]*x[c+1],
// columns wrapping circularly at the seam.
template <class T>
inline void triple_dot_wrap(const T* g, const T* x, int w, double& a0, double& a1, double& a2) {
    T l0[4] = {}, l1[4] = {}, l2[4] = {};
    int c = 1;
    for (; c + 4 <= w - 1; c += 4) {
        for (int j = 0; j < 4; ++j) {
            T gv = g[c + j];
            l0[j] += gv * x[c + j - 1];
            l1[j] += gv * x[c + j];
            l2[j] += gv * x[c + j + 1];
        }
    }
    for (; c < w - 1; ++c) {
        l0[0] += g[c] * x[c - 1];
        l1[0] += g[c] * x[c];
        l2[0] += g[c] * x[c + 1];
    }
    T b0 = g[0] * x[w - 1] + g[w - 1] * x[w - 2];
    T b1 = g[0] * x[0] + g[w - 1] * x[w - 1];
    T b2 = g[0] * x[1 % w] + g[w - 1] * x[0];
    a0 += double(((l0[0] + l0[1]) + (l0[2] + l0[3])) + b0);
    a1 += double(((l1[0] + l1[1]) + (l1[2] + l1[3])) + b1);
    a2 += double(((l2[0] + l2[1]) + (l2[2] + l2[3])) + b2);
}

template <class T>
inline void sum_sumsq_lanes(const T* p, std::size_t n, double& sum_out, double& sumsq_out) {
    T s0{}, s1{}, s2{}, s3{}, q0{}, q1{}, q2{}, q3{};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += p[i];
        q0 += p[i] * p[i];
        s1 += p[i + 1];
        q1 += p[i + 1] * p[i + 1];
        s2 += p[i + 2];
        q2 += p[i + 2] * p[i + 2];
        s3 += p[i + 3];
        q3 += p[i + 3] * p[i + 3];
    }
    T st{}, qt{};
    for (; i < n; ++i) {
        st += p[i];
        qt += p[i] * p[i];
    }
    sum_out += double(((s0 + s1) + (s2 + s3)) + st);
    sumsq_out += double(((q0 + q1) + (q2 + q3)) + qt);
}

// ---------------------------------------------------------------------------
// Convolution. 3x3 kernels pad horizontally with circular wrap (the image is
// a full azimuth sweep) and vertically by edge replication. Backward passes
// are written as gathers: every output element is produced by exactly one
// loop iteration, which keeps gradients bit-identical for any thread count.
// ---------------------------------------------------------------------------
template <class T>
struct Conv2d {
    int in_ch = 0;
    int out_ch = 0;
    int ksize = 3; // 1 or 3
    std::vector<T> w, gw; // [out][in][k][k]
    std::vector<T> b, gb; // [out]

    void init(int in, int out, int k, Rng& rng, bool zero = false) {
        in_ch = in;
        out_ch = out;
        ksize = k;
        w.assign(static_cast<std::size_t>(out) * in * k * k, T{0});
        b.assign(out, T{0});
        if (!zero) {
            double std = std::sqrt(2.0 / (static_cast<double>(in) * k * k));
            for (T& v : w) v = static_cast<T>(rng.normal() * std);
        }
        gw.assign(w.size(), T{0});
        gb.assign(b.size(), T{0});
    }

    std::size_t param_count() const { return w.size() + b.size(); }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".w", &w, &gw});
        out.push_back({prefix + ".b", &b, &gb});
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.c != in_ch) throw ConfigError("conv: input channel mismatch");
        return ksize == 1 ? forward1(x) : forward3(x);
    }

    // Accumulates gw/gb; returns grad wrt input unless need_gx is false.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy, bool need_gx = true) {
        if (ksize == 1) {
            backward1_params(x, gy);
            return need_gx ? backward1_input(gy, x.h, x.w) : Tensor<T>();
        }
        backward3_params(x, gy);
        return need_gx ? backward3_input(gy, x.h, x.w) : Tensor<T>();
    }

private:
    Tensor<T> forward3(const Tensor<T>& x) const {
        const int H = x.h, W = x.w;
        Tensor<T> y(out_ch, H, W);
        parallel_for(out_ch * H, [&](int job) {
            int o = job / H, r = job % H;
            T* yrow = y.plane(o) + static_cast<std::size_t>(r) * W;
            for (int c = 0; c < W; ++c) yrow[c] = b[o];
            for (int i = 0; i < in_ch; ++i) {
                const T* xp = x.plane(i);
                for (int kr = 0; kr < 3; ++kr) {
                    int sr = std::clamp(r + kr - 1, 0, H - 1);
                    const T* xr = xp + static_cast<std::size_t>(sr) * W;
                    const T* wk =
                        w.data() + ((static_cast<std::size_t>(o) * in_ch + i) * 3 + kr) * 3;
                    T w0 = wk[0], w1 = wk[1], w2 = wk[2];
                    yrow[0] += w0 * xr[W - 1] + w1 * xr[0] + w2 * xr[1 % W];
                    for (int c = 1; c < W - 1; ++c)
                        yrow[c] += w0 * xr[c - 1] + w1 * xr[c] + w2 * xr[c + 1];
                    if (W > 1) yrow[W - 1] += w0 * xr[W - 2] + w1 * xr[W - 1] + w2 * xr[0];
                }
            }
        });
        return y;
    }

    Tensor<T> backward3_input(const Tensor<T>& gy, int H, int W) const {
        Tensor<T> gx(in_ch, H, W);
        parallel_for(in_ch * H, [&](int job) {
            int i = job / H, rp = job % H;
            T* grow = gx.plane(i) + static_cast<std::size_t>(rp) * W;
            for (int o = 0; o < out_ch; ++o) {
                const T* gyp = gy.plane(o);
                for (int kr = 0; kr < 3; ++kr) {
                    // Output rows whose kr-tap read input row rp (replicate pad).
                    int rows[2];
                    int n = 0;
                    int r0 = rp - kr + 1;
                    if (r0 >= 0 && r0 < H) rows[n++] = r0;
                    if (kr == 0 && rp == 0 && r0 != 0) rows[n++] = 0;
                    if (kr == 2 && rp == H - 1 && r0 != H - 1) rows[n++] = H - 1;
                    const T* wk =
                        w.data() + ((static_cast<std::size_t>(o) * in_ch + i) * 3 + kr) * 3;
                    T w0 = wk[0], w1 = wk[1], w2 = wk[2];
                    for (int s = 0; s < n; ++s) {
                        const T* gr = gyp + static_cast<std::size_t>(rows[s]) * W;
                        grow[0] += w0 * gr[1 % W] + w1 * gr[0] + w2 * gr[W - 1];
                        for (int c = 1; c < W - 1; ++c)
                            grow[c] += w0 * gr[c + 1] + w1 * gr[c] + w2 * gr[c - 1];
                        if (W > 1) grow[W - 1] += w0 * gr[0] + w1 * gr[W - 1] + w2 * gr[W - 2];
                    }
                }
            }
        });
        return gx;
    }

    void backward3_params(const Tensor<T>& x, const Tensor<T>& gy) {
        const int H = x.h, W = x.w;
        parallel_for(out_ch, [&](int o) {
            const T* gyp = gy.plane(o);
            double bacc = 0.0, unused = 0.0;
            sum_sumsq_lanes(gyp, gy.plane_size(), bacc, unused);
            gb[o] += static_cast<T>(bacc);
            for (int i = 0; i < in_ch; ++i) {
                const T* xp = x.plane(i);
                for (int kr = 0; kr < 3; ++kr) {
                    double acc[3] = {0.0, 0.0, 0.0};
                    for (int r = 0; r < H; ++r) {
                        int sr = std::clamp(r + kr - 1, 0, H - 1);
                        const T* xr = xp + static_cast<std::size_t>(sr) * W;
                        const T* gr = gyp + static_cast<std::size_t>(r) * W;
                        triple_dot_wrap(gr, xr, W, acc[0], acc[1], acc[2]);
                    }
                    std::size_t base = ((static_cast<std::size_t>(o) * in_ch + i) * 3 + kr) * 3;
                    for (int kc = 0; kc < 3; ++kc) gw[base + kc] += static_cast<T>(acc[kc]);
                }
            }
        });
    }

    Tensor<T> forward1(const Tensor<T>& x) const {
        Tensor<T> y(out_ch, x.h, x.w);
        std::size_t n = x.plane_size();
        parallel_for(out_ch, [&](int o) {
            T* yp = y.plane(o);
            for (std::size_t i = 0; i < n; ++i) yp[i] = b[o];
            for (int ci = 0; ci < in_ch; ++ci) {
                const T* xp = x.plane(ci);
                T wv = w[static_cast<std::size_t>(o) * in_ch + ci];
                for (std::size_t i = 0; i < n; ++i) yp[i] += wv * xp[i];
            }
        });
        return y;
    }

    Tensor<T> backward1_input(const Tensor<T>& gy, int H, int W) const {
        Tensor<T> gx(in_ch, H, W);
        std::size_t n = gx.plane_size();
        parallel_for(in_ch, [&](int ci) {
            T* gp = gx.plane(ci);
            for (int o = 0; o < out_ch; ++o) {
                const T* gyp = gy.plane(o);
                T wv = w[static_cast<std::size_t>(o) * in_ch + ci];
                for (std::size_t i = 0; i < n; ++i) gp[i] += wv * gyp[i];
            }
        });
        return gx;
    }

    void backward1_params(const Tensor<T>& x, const Tensor<T>& gy) {
        std::size_t n = x.plane_size();
        parallel_for(out_ch, [&](int o) {
            const T* gyp = gy.plane(o);
            double bacc = 0.0, unused = 0.0;
            sum_sumsq_lanes(gyp, n, bacc, unused);
            gb[o] += static_cast<T>(bacc);
            for (int ci = 0; ci < in_ch; ++ci) {
                const T* xp = x.plane(ci);
                gw[static_cast<std::size_t>(o) * in_ch + ci] +=
                    static_cast<T>(dot_lanes(gyp, xp, static_cast<int>(n)));
            }
        });
    }
};

// ---------------------------------------------------------------------------
// GroupNorm with per-channel affine parameters.
// ---------------------------------------------------------------------------
inline int groupnorm_groups(int channels) {
    for (int g : {8, 4, 2})
        if (channels % g == 0) return g;
    return 1;
}

template <class T>
struct GroupNorm {
    int channels = 0;
    int groups = 1;
    double eps = 1e-5;
    std::vector<T> gamma, ggamma, beta, gbeta;

    struct Cache {
        Tensor<T> xhat;
        std::vector<double> inv_std;
    };

    void init(int ch) {
        channels = ch;
        groups = groupnorm_groups(ch);
        gamma.assign(ch, T{1});
        beta.assign(ch, T{0});
        ggamma.assign(ch, T{0});
        gbeta.assign(ch, T{0});
    }

    std::size_t param_count() const { return gamma.size() + beta.size(); }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".g", &gamma, &ggamma});
        out.push_back({prefix + ".b", &beta, &gbeta});
    }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
        if (x.c != channels) throw ConfigError("groupnorm: channel mismatch");
        int cpg = channels / groups;
        std::size_t plane = x.plane_size();
        Tensor<T> y(x.c, x.h, x.w);
        if (cache) {
            cache->xhat = Tensor<T>(x.c, x.h, x.w);
            cache->inv_std.assign(groups, 0.0);
        }
        parallel_for(groups, [&](int g) {
            double sum = 0.0, sumsq = 0.0;
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci)
                sum_sumsq_lanes(x.plane(ci), plane, sum, sumsq);
            double n = double(cpg) * plane;
            double mean = sum / n;
            double var = std::max(0.0, sumsq / n - mean * mean);
            double inv_std = 1.0 / std::sqrt(var + eps);
            if (cache) cache->inv_std[g] = inv_std;
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci) {
                const T* xp = x.plane(ci);
                T* yp = y.plane(ci);
                T* hp = cache ? cache->xhat.plane(ci) : nullptr;
                T gm = gamma[ci], bt = beta[ci];
                for (std::size_t i = 0; i < plane; ++i) {
                    T xh = static_cast<T>((xp[i] - mean) * inv_std);
                    if (hp) hp[i] = xh;
                    yp[i] = gm * xh + bt;
                }
            }
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const Cache& cache) {
        int cpg = channels / groups;
        std::size_t plane = gy.plane_size();
        Tensor<T> gx(gy.c, gy.h, gy.w);
        parallel_for(groups, [&](int g) {
            double s1 = 0.0, s2 = 0.0; // sums of dxhat and dxhat*xhat over the group
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci) {
                const T* gp = gy.plane(ci);
                const T* hp = cache.xhat.plane(ci);
                double dg = 0.0, db = 0.0;
                double gm = gamma[ci];
                for (std::size_t i = 0; i < plane; ++i) {
                    double gyv = gp[i];
                    double xh = hp[i];
                    db += gyv;
                    dg += gyv * xh;
                    s1 += gyv * gm;
                    s2 += gyv * gm * xh;
                }
                ggamma[ci] += static_cast<T>(dg);
                gbeta[ci] += static_cast<T>(db);
            }
            double n = double(cpg) * plane;
            double m1 = s1 / n, m2 = s2 / n;
            double inv_std = cache.inv_std[g];
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci) {
                const T* gp = gy.plane(ci);
                const T* hp = cache.xhat.plane(ci);
                T* op = gx.plane(ci);
                double gm = gamma[ci];
                for (std::size_t i = 0; i < plane; ++i)
                    op[i] = static_cast<T>(inv_std * (double(gp[i]) * gm - m1 - double(hp[i]) * m2));
            }
        });
        return gx;
    }
};

// ---------------------------------------------------------------------------
// SiLU activation.
// ---------------------------------------------------------------------------
template <class T>
inline T sigmoid_value(T x) {
    return T{1} / (T{1} + std::exp(-x)); // native-precision exp
}

template <class T>
inline Tensor<T> silu(const Tensor<T>& x) {
    Tensor<T> y(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        T s = sigmoid_value(x.data[i]);
        y.data[i] = x.data[i] * s;
    }
    return y;
}

template <class T>
inline Tensor<T> silu_backward(const Tensor<T>& x, const Tensor<T>& gy) {
    Tensor<T> gx(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        T s = sigmoid_value(x.data[i]);
        gx.data[i] = gy.data[i] * (s * (T{1} + x.data[i] * (T{1} - s)));
    }
    return gx;
}

template <class T>
inline std::vector<T> silu_vec(const std::vector<T>& x) {
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid_value(x[i]);
    return y;
}

template <class T>
inline std::vector<T> silu_vec_backward(const std::vector<T>& x, const std::vector<T>& gy) {
    std::vector<T> gx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        T s = sigmoid_value(x[i]);
        gx[i] = gy[i] * (s * (T{1} + x[i] * (T{1} - s)));
    }
    return gx;
}

// ---------------------------------------------------------------------------
// 2x2 average pooling and nearest-neighbor 2x upsampling.
// ---------------------------------------------------------------------------
template <class T>
inline Tensor<T> avg_pool2(const Tensor<T>& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw ConfigError("avg_pool2: odd spatial size");
    Tensor<T> y(x.c, x.h / 2, x.w / 2);
    parallel_for(x.c, [&](int ci) {
        const T* xp = x.plane(ci);
        T* yp = y.plane(ci);
        for (int r = 0; r < y.h; ++r)
            for (int c = 0; c < y.w; ++c) {
                const T* a = xp + static_cast<std::size_t>(2 * r) * x.w + 2 * c;
                const T* bb = a + x.w;
                yp[static_cast<std::size_t>(r) * y.w + c] =
                    (a[0] + a[1] + bb[0] + bb[1]) * static_cast<T>(0.25);
            }
    });
    return y;
}

template <class T>
inline Tensor<T> avg_pool2_backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.c, gy.h * 2, gy.w * 2);
    parallel_for(gy.c, [&](int ci) {
        const T* gp = gy.plane(ci);
        T* op = gx.plane(ci);
        for (int r = 0; r < gy.h; ++r)
            for (int c = 0; c < gy.w; ++c) {
                T v = gp[static_cast<std::size_t>(r) * gy.w + c] * static_cast<T>(0.25);
                T* a = op + static_cast<std::size_t>(2 * r) * gx.w + 2 * c;
                a[0] = v;
                a[1] = v;
                a[gx.w] = v;
                a[gx.w + 1] = v;
            }
    });
    return gx;
}

template <class T>
inline Tensor<T> up_nearest2(const Tensor<T>& x) {
    Tensor<T> y(x.c, x.h * 2, x.w * 2);
    parallel_for(x.c, [&](int ci) {
        const T* xp = x.plane(ci);
        T* yp = y.plane(ci);
        for (int r = 0; r < y.h; ++r) {
            const T* xr = xp + static_cast<std::size_t>(r / 2) * x.w;
            T* yr = yp + static_cast<std::size_t>(r) * y.w;
            for (int c = 0; c < y.w; ++c) yr[c] = xr[c / 2];
        }
    });
    return y;
}

template <class T>
inline Tensor<T> up_nearest2_backward(const Tensor<T>& gy) {
    if (gy.h % 2 != 0 || gy.w % 2 != 0) throw ConfigError("up_nearest2_backward: odd size");
    Tensor<T> gx(gy.c, gy.h / 2, gy.w / 2);
    parallel_for(gy.c, [&](int ci) {
        const T* gp = gy.plane(ci);
        T* op = gx.plane(ci);
        for (int r = 0; r < gx.h; ++r)
            for (int c = 0; c < gx.w; ++c) {
                const T* a = gp + static_cast<std::size_t>(2 * r) * gy.w + 2 * c;
                const T* bb = a + gy.w;
                op[static_cast<std::size_t>(r) * gx.w + c] = a[0] + a[1] + bb[0] + bb[1];
            }
    });
    return gx;
}

// ---------------------------------------------------------------------------
// Dense layer on plain vectors (timestep-embedding pipeline).
// ---------------------------------------------------------------------------
template <class T>
struct Linear {
    int in = 0;
    int out = 0;
    std::vector<T> w, gw; // [out][in]
    std::vector<T> b, gb;

    void init(int in_dim, int out_dim, Rng& rng, bool zero = false) {
        in = in_dim;
        out = out_dim;
        w.assign(static_cast<std::size_t>(in) * out, T{0});
        b.assign(out, T{0});
        if (!zero) {
            double std = std::sqrt(1.0 / in);
            for (T& v : w) v = static_cast<T>(rng.normal() * std);
        }
        gw.assign(w.size(), T{0});
        gb.assign(b.size(), T{0});
    }

    std::size_t param_count() const { return w.size() + b.size(); }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out_refs) {
        out_refs.push_back({prefix + ".w", &w, &gw});
        out_refs.push_back({prefix + ".b", &b, &gb});
    }

    std::vector<T> forward(const std::vector<T>& x) const {
        std::vector<T> y(out);
        for (int o = 0; o < out; ++o) {
            double acc = b[o];
            const T* wr = w.data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) acc += double(wr[i]) * x[i];
            y[o] = static_cast<T>(acc);
        }
        return y;
    }

    std::vector<T> backward(const std::vector<T>& x, const std::vector<T>& gy,
                            bool need_gx = true) {
        for (int o = 0; o < out; ++o) {
            gb[o] += gy[o];
            T* gwr = gw.data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) gwr[i] += gy[o] * x[i];
        }
        if (!need_gx) return {};
        std::vector<T> gx(in, T{0});
        for (int o = 0; o < out; ++o) {
            const T* wr = w.data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) gx[i] += wr[i] * gy[o];
        }
        return gx;
    }
};

// ---------------------------------------------------------------------------
// Channel concatenation (skip connections).
// ---------------------------------------------------------------------------
template <class T>
inline Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.h != b.h || a.w != b.w) throw ConfigError("concat: spatial mismatch");
    Tensor<T> y(a.c + b.c, a.h, a.w);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + a.data.size());
    return y;
}

template <class T>
inline std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, int c_first) {
    Tensor<T> a(c_first, g.h, g.w);
    Tensor<T> b(g.c - c_first, g.h, g.w);
    std::copy(g.data.begin(), g.data.begin() + a.data.size(), a.data.begin());
    std::copy(g.data.begin() + a.data.size(), g.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

template <class T>
inline void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    if (!dst.same_shape(src)) throw ConfigError("add: shape mismatch");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

} // namespace lidarup
