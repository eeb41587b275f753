#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/layers.hpp"
#include "lidarup/mask.hpp"
#include "lidarup/range_image.hpp"
#include "lidarup/rng.hpp"
#include "lidarup/tensor.hpp"

namespace lidarup {

// Network shape. Input is always 5 channels: 2 blended data channels, the
// binary mask, and 2 coordinate channels (row position, azimuth phase);
// output is the 2-channel noise prediction.
struct NetConfig {
    int base_channels = 32;
    std::vector<int> channel_mults = {1, 2, 4};
    std::vector<int> res_blocks = {1, 2, 4};
    int temb_dim = 128;
    int in_channels = 5;
    int out_channels = 2;

    int levels() const { return static_cast<int>(channel_mults.size()); }
    int channels_at(int level) const { return base_channels * channel_mults[level]; }

    void validate() const {
        if (base_channels < 1) throw ConfigError("net: base_channels must be positive");
        if (channel_mults.empty() || channel_mults.size() != res_blocks.size())
            throw ConfigError("net: channel_mults and res_blocks must be nonempty and equal length");
        for (std::size_t i = 0; i < channel_mults.size(); ++i) {
            if (channel_mults[i] < 1 || res_blocks[i] < 1)
                throw ConfigError("net: multipliers and block counts must be positive");
            if (i > 0 && channel_mults[i] < channel_mults[i - 1])
                throw ConfigError("net: channel multipliers must be nondecreasing");
        }
        if (temb_dim < 2 || temb_dim % 2 != 0)
            throw ConfigError("net: temb_dim must be even and positive");
        if (in_channels != 5 || out_channels != 2)
            throw ConfigError("net: expected 5 input channels and 2 output channels");
    }

    std::string describe() const {
        std::string s = "base=" + std::to_string(base_channels) + " mults=";
        for (int m : channel_mults) s += std::to_string(m) + ",";
        s += " blocks=";
        for (int b : res_blocks) s += std::to_string(b) + ",";
        s += " temb=" + std::to_string(temb_dim);
        s += " in=" + std::to_string(in_channels) + " out=" + std::to_string(out_channels);
        return s;
    }

    std::uint64_t fingerprint() const { return fnv1a64(describe()); }

    bool operator==(const NetConfig&) const = default;
};

/// Sinusoidal conditioning vector: [sin(t*w_k) | cos(t*w_k)] with
/// w_k = 10000^(-2k/dim) for k = 0..dim/2-1.
template <class T>
inline std::vector<T> timestep_embedding(double t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep_embedding: dim must be even");
    int half = dim / 2;
    std::vector<T> e(static_cast<std::size_t>(dim));
    for (int k = 0; k < half; ++k) {
        double w = std::pow(10000.0, -2.0 * k / dim);
        e[k] = static_cast<T>(std::sin(t * w));
        e[half + k] = static_cast<T>(std::cos(t * w));
    }
    return e;
}

/// Coordinate planes fed as extra input channels: channel 0 is the row center
/// (r+0.5)/H, channel 1 is sin(azimuth) of the column center, periodic across
/// the horizontal wrap. A (sin, cos) pair would need a third channel, which
/// the 5-channel input contract does not leave room for.
template <class T>
inline Tensor<T> make_coord_channels(int h, int w) {
    Tensor<T> t(2, h, w);
    for (int r = 0; r < h; ++r) {
        T v = static_cast<T>((r + 0.5) / h);
        for (int c = 0; c < w; ++c) t.at(0, r, c) = v;
    }
    for (int c = 0; c < w; ++c) {
        T v = static_cast<T>(std::sin((0.5 - (c + 0.5) / w) * kTwoPi));
        for (int r = 0; r < h; ++r) t.at(1, r, c) = v;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Residual block: GN -> SiLU -> conv3x3 -> +time shift -> GN -> SiLU ->
// conv3x3(zero-init) with identity (or 1x1-projected) skip. Zero-initialized
// second conv makes the block an identity map at initialization.
// ---------------------------------------------------------------------------
template <class T>
struct ResBlock {
    int in_ch = 0, out_ch = 0;
    GroupNorm<T> gn1;
    Conv2d<T> conv1;
    Linear<T> shift; // temb -> per-channel bias
    GroupNorm<T> gn2;
    Conv2d<T> conv2;
    Conv2d<T> skip; // 1x1 projection, used only when in_ch != out_ch

    struct Cache {
        Tensor<T> x;
        typename GroupNorm<T>::Cache gn1c;
        Tensor<T> a1; // gn1 output (SiLU input)
        Tensor<T> s1; // conv1 input
        typename GroupNorm<T>::Cache gn2c;
        Tensor<T> a2;
        Tensor<T> s2;
    };

    void init(int in, int out, int temb_dim, Rng& rng) {
        in_ch = in;
        out_ch = out;
        gn1.init(in);
        conv1.init(in, out, 3, rng);
        shift.init(temb_dim, out, rng, /*zero=*/true);
        gn2.init(out);
        conv2.init(out, out, 3, rng, /*zero=*/true);
        if (in != out) skip.init(in, out, 1, rng);
    }

    std::size_t param_count() const {
        std::size_t n = gn1.param_count() + conv1.param_count() + shift.param_count() +
                        gn2.param_count() + conv2.param_count();
        if (in_ch != out_ch) n += skip.param_count();
        return n;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        gn1.collect(prefix + ".gn1", out);
        conv1.collect(prefix + ".conv1", out);
        shift.collect(prefix + ".shift", out);
        gn2.collect(prefix + ".gn2", out);
        conv2.collect(prefix + ".conv2", out);
        if (in_ch != out_ch) skip.collect(prefix + ".skip", out);
    }

    Tensor<T> forward(const Tensor<T>& x, const std::vector<T>& e, Cache* cache) const {
        Tensor<T> a1 = gn1.forward(x, cache ? &cache->gn1c : nullptr);
        Tensor<T> s1 = silu(a1);
        Tensor<T> h = conv1.forward(s1);
        std::vector<T> sh = shift.forward(e);
        for (int ci = 0; ci < out_ch; ++ci) {
            T* hp = h.plane(ci);
            T v = sh[ci];
            for (std::size_t i = 0; i < h.plane_size(); ++i) hp[i] += v;
        }
        Tensor<T> a2 = gn2.forward(h, cache ? &cache->gn2c : nullptr);
        Tensor<T> s2 = silu(a2);
        Tensor<T> y = conv2.forward(s2);
        if (in_ch != out_ch)
            add_inplace(y, skip.forward(x));
        else
            add_inplace(y, x);
        if (cache) {
            cache->x = x;
            cache->a1 = std::move(a1);
            cache->s1 = std::move(s1);
            cache->a2 = std::move(a2);
            cache->s2 = std::move(s2);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy, const Cache& cache, const std::vector<T>& e,
                       std::vector<T>& ge) {
        Tensor<T> gs2 = conv2.backward(cache.s2, gy);
        Tensor<T> ga2 = silu_backward(cache.a2, gs2);
        Tensor<T> gh = gn2.backward(ga2, cache.gn2c);

        // Time shift: d(loss)/d(shift[c]) is the spatial sum of gh over channel c.
        std::vector<T> gsh(static_cast<std::size_t>(out_ch));
        for (int ci = 0; ci < out_ch; ++ci) {
            const T* hp = gh.plane(ci);
            double acc = 0.0;
            for (std::size_t i = 0; i < gh.plane_size(); ++i) acc += hp[i];
            gsh[ci] = static_cast<T>(acc);
        }
        std::vector<T> ge_local = shift.backward(e, gsh);
        for (std::size_t i = 0; i < ge.size(); ++i) ge[i] += ge_local[i];

        Tensor<T> gs1 = conv1.backward(cache.s1, gh);
        Tensor<T> ga1 = silu_backward(cache.a1, gs1);
        Tensor<T> gx = gn1.backward(ga1, cache.gn1c);

        if (in_ch != out_ch)
            add_inplace(gx, skip.backward(cache.x, gy));
        else
            add_inplace(gx, gy);
        return gx;
    }
};

// ---------------------------------------------------------------------------
// U-Net noise predictor. Downsampling applies the channel-changing
// convolution after the pooling step and the upsampling path applies it
// before the nearest-neighbor upsample; skip connections concatenate at
// equal resolutions; the deepest level carries the most residual blocks.
// ---------------------------------------------------------------------------
template <class T>
struct NetTape {
    std::vector<T> e0, h1, hs;  // embedding pipeline
    std::vector<T> e;
    std::vector<typename ResBlock<T>::Cache> res;
    std::vector<Tensor<T>> conv_in; // inputs of stem/down/up convs in walk order
    typename GroupNorm<T>::Cache head_gnc;
    Tensor<T> head_a; // head GN output (SiLU input)
    Tensor<T> head_s; // head conv input
};

template <class T>
class DenoiserNet {
public:
    DenoiserNet(const NetConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
        cfg.validate();
        Rng rng(derive_seed(init_seed, "net_init"));
        int n = cfg.levels();

        temb1_.init(cfg.temb_dim, cfg.temb_dim, rng);
        temb2_.init(cfg.temb_dim, cfg.temb_dim, rng);
        stem_.init(cfg.in_channels, cfg.channels_at(0), 3, rng);

        down_blocks_.resize(n);
        for (int L = 0; L < n; ++L) {
            down_blocks_[L].resize(cfg.res_blocks[L]);
            for (auto& b : down_blocks_[L]) b.init(cfg.channels_at(L), cfg.channels_at(L), cfg.temb_dim, rng);
            if (L + 1 < n) {
                down_convs_.emplace_back();
                down_convs_.back().init(cfg.channels_at(L), cfg.channels_at(L + 1), 3, rng);
            }
        }

        for (int L = n - 1; L >= 1; --L) {
            up_convs_.emplace_back();
            up_convs_.back().init(cfg.channels_at(L), cfg.channels_at(L - 1), 3, rng);
            std::vector<ResBlock<T>> blocks(cfg.res_blocks[L - 1]);
            blocks[0].init(2 * cfg.channels_at(L - 1), cfg.channels_at(L - 1), cfg.temb_dim, rng);
            for (std::size_t i = 1; i < blocks.size(); ++i)
                blocks[i].init(cfg.channels_at(L - 1), cfg.channels_at(L - 1), cfg.temb_dim, rng);
            up_blocks_.push_back(std::move(blocks));
        }

        head_gn_.init(cfg.channels_at(0));
        head_conv_.init(cfg.channels_at(0), cfg.out_channels, 3, rng, /*zero=*/true);

        collect_params();
    }

    const NetConfig& config() const { return cfg_; }

    std::vector<ParamRef<T>>& params() { return params_; }
    const std::vector<ParamRef<T>>& params() const { return params_; }

    std::size_t total_params() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value->size();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), T{0});
    }

    bool params_finite() const {
        for (const auto& p : params_)
            for (T v : *p.value)
                if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    /// Inference entry point: assembles [u | mask | coords] and runs the walk.
    Tensor<T> predict(const Tensor<T>& u, const Mask& m, int t) const {
        return forward_raw(assemble_input(u, m, make_coord_channels<T>(u.h, u.w)), t, nullptr);
    }

    /// Same, with caller-supplied coordinate planes.
    Tensor<T> predict_with_coords(const Tensor<T>& u, const Mask& m, const Tensor<T>& coords,
                                  int t) const {
        return forward_raw(assemble_input(u, m, coords), t, nullptr);
    }

    Tensor<T> assemble_input(const Tensor<T>& u, const Mask& m, const Tensor<T>& coords) const {
        if (u.c != 2) throw ConfigError("denoiser: data tensor must have 2 channels");
        if (u.h != m.h || u.w != m.w) throw ConfigError("denoiser: mask shape mismatch");
        if (coords.c != 2 || coords.h != u.h || coords.w != u.w)
            throw ConfigError("denoiser: coord shape mismatch");
        Tensor<T> in(cfg_.in_channels, u.h, u.w);
        std::size_t n = in.plane_size();
        std::copy(u.plane(0), u.plane(0) + n, in.plane(0));
        std::copy(u.plane(1), u.plane(1) + n, in.plane(1));
        T* mp = in.plane(2);
        for (std::size_t i = 0; i < n; ++i) mp[i] = static_cast<T>(m.bits[i]);
        std::copy(coords.plane(0), coords.plane(0) + n, in.plane(3));
        std::copy(coords.plane(1), coords.plane(1) + n, in.plane(4));
        return in;
    }

    /// Core walk over the raw 5-channel input. `tape` may be null for pure
    /// inference; with a tape the activations needed by backward are kept.
    Tensor<T> forward_raw(const Tensor<T>& input, double t, NetTape<T>* tape) const {
        check_spatial(input.h, input.w);
        if (input.c != cfg_.in_channels) throw ConfigError("denoiser: input channel mismatch");
        if (!params_finite()) throw CheckpointError("denoiser: non-finite parameters");

        std::vector<T> e0 = timestep_embedding<T>(t, cfg_.temb_dim);
        std::vector<T> h1 = temb1_.forward(e0);
        std::vector<T> hs = silu_vec(h1);
        std::vector<T> e = temb2_.forward(hs);
        if (tape) {
            tape->e0 = e0;
            tape->h1 = h1;
            tape->hs = hs;
            tape->e = e;
            tape->conv_in.push_back(input);
        }

        int n = cfg_.levels();
        Tensor<T> x = stem_.forward(input);
        std::vector<Tensor<T>> skips;
        for (int L = 0; L < n; ++L) {
            for (const auto& block : down_blocks_[L]) {
                typename ResBlock<T>::Cache* c = push_cache(tape);
                x = block.forward(x, e, c);
            }
            if (L + 1 < n) {
                skips.push_back(x);
                Tensor<T> pooled = avg_pool2(x);
                if (tape) tape->conv_in.push_back(pooled);
                x = down_convs_[L].forward(pooled);
            }
        }

        for (std::size_t ui = 0; ui < up_blocks_.size(); ++ui) {
            if (tape) tape->conv_in.push_back(x);
            x = up_convs_[ui].forward(x);
            x = up_nearest2(x);
            x = concat_channels(x, skips.back());
            skips.pop_back();
            for (const auto& block : up_blocks_[ui]) {
                typename ResBlock<T>::Cache* c = push_cache(tape);
                x = block.forward(x, e, c);
            }
        }

        Tensor<T> a = head_gn_.forward(x, tape ? &tape->head_gnc : nullptr);
        Tensor<T> s = silu(a);
        Tensor<T> out = head_conv_.forward(s);
        if (tape) {
            tape->head_a = std::move(a);
            tape->head_s = std::move(s);
        }
        return out;
    }

    /// Reverse walk; accumulates parameter gradients from one example.
    void backward(const NetTape<T>& tape, const Tensor<T>& gout) {
        std::vector<T> ge(static_cast<std::size_t>(cfg_.temb_dim), T{0});
        std::size_t res_cursor = tape.res.size();
        std::size_t conv_cursor = tape.conv_in.size();

        Tensor<T> gs = head_conv_.backward(tape.head_s, gout);
        Tensor<T> ga = silu_backward(tape.head_a, gs);
        Tensor<T> g = head_gn_.backward(ga, tape.head_gnc);

        int n = cfg_.levels();
        std::vector<Tensor<T>> skip_grads;
        for (std::size_t ui = up_blocks_.size(); ui-- > 0;) {
            // mirrored in reverse: last up level first, blocks within it last first
            auto& blocks = up_blocks_[ui];
            for (std::size_t bi = blocks.size(); bi-- > 0;) {
                --res_cursor;
                g = blocks[bi].backward(g, tape.res[res_cursor], tape.e, ge);
            }
            auto [g_up, g_skip] = split_channels(g, g.c / 2);
            skip_grads.push_back(std::move(g_skip));
            Tensor<T> g_pre_up = up_nearest2_backward(g_up);
            --conv_cursor;
            g = up_convs_[ui].backward(tape.conv_in[conv_cursor], g_pre_up);
        }

        for (int L = n - 1; L >= 0; --L) {
            if (L + 1 < n) {
                --conv_cursor;
                Tensor<T> g_pooled = down_convs_[L].backward(tape.conv_in[conv_cursor], g);
                g = avg_pool2_backward(g_pooled);
                add_inplace(g, skip_grads.back());
                skip_grads.pop_back();
            }
            for (std::size_t bi = down_blocks_[L].size(); bi-- > 0;) {
                --res_cursor;
                g = down_blocks_[L][bi].backward(g, tape.res[res_cursor], tape.e, ge);
            }
        }

        --conv_cursor;
        stem_.backward(tape.conv_in[conv_cursor], g, /*need_gx=*/false);

        std::vector<T> ghs = temb2_.backward(tape.hs, ge);
        std::vector<T> gh1 = silu_vec_backward(tape.h1, ghs);
        temb1_.backward(tape.e0, gh1, /*need_gx=*/false);
    }

    void check_spatial(int h, int w) const {
        int factor = 1 << (cfg_.levels() - 1);
        if (h % factor != 0 || w % factor != 0)
            throw ConfigError("denoiser: spatial size must be divisible by " +
                              std::to_string(factor));
        if (h / factor < 2 || w / factor < 2)
            throw ConfigError("denoiser: spatial size too small for level count");
    }

private:
    typename ResBlock<T>::Cache* push_cache(NetTape<T>* tape) const {
        if (!tape) return nullptr;
        tape->res.emplace_back();
        return &tape->res.back();
    }

    void collect_params() {
        params_.clear();
        temb1_.collect("temb1", params_);
        temb2_.collect("temb2", params_);
        stem_.collect("stem", params_);
        for (std::size_t L = 0; L < down_blocks_.size(); ++L) {
            for (std::size_t i = 0; i < down_blocks_[L].size(); ++i)
                down_blocks_[L][i].collect(
                    "down" + std::to_string(L) + ".res" + std::to_string(i), params_);
            if (L < down_convs_.size())
                down_convs_[L].collect("down" + std::to_string(L) + ".proj", params_);
        }
        for (std::size_t u = 0; u < up_blocks_.size(); ++u) {
            up_convs_[u].collect("up" + std::to_string(u) + ".proj", params_);
            for (std::size_t i = 0; i < up_blocks_[u].size(); ++i)
                up_blocks_[u][i].collect("up" + std::to_string(u) + ".res" + std::to_string(i),
                                         params_);
        }
        head_gn_.collect("head.gn", params_);
        head_conv_.collect("head.conv", params_);
    }

    NetConfig cfg_;
    Linear<T> temb1_, temb2_;
    Conv2d<T> stem_;
    std::vector<std::vector<ResBlock<T>>> down_blocks_;
    std::vector<Conv2d<T>> down_convs_;
    std::vector<Conv2d<T>> up_convs_;               // in forward order (deepest first)
    std::vector<std::vector<ResBlock<T>>> up_blocks_; // same order as up_convs_
    GroupNorm<T> head_gn_;
    Conv2d<T> head_conv_;
    std::vector<ParamRef<T>> params_;
};

/// Parameter count as a pure function of the configuration. Mirrors the
/// construction arithmetic: conv k*k = out*(in*k*k + 1), group norm = 2*ch,
/// dense = out*(in + 1); residual blocks add a 1x1 projection only when the
/// channel count changes (the first block after each skip concatenation).
inline std::size_t param_count(const NetConfig& cfg) {
    cfg.validate();
    auto conv = [](int in, int out, int k) {
        return static_cast<std::size_t>(out) * (static_cast<std::size_t>(in) * k * k + 1);
    };
    auto dense = [](int in, int out) {
        return static_cast<std::size_t>(out) * (static_cast<std::size_t>(in) + 1);
    };
    auto gn = [](int ch) { return static_cast<std::size_t>(2) * ch; };
    auto block = [&](int in, int out, int temb) {
        std::size_t n = gn(in) + conv(in, out, 3) + dense(temb, out) + gn(out) + conv(out, out, 3);
        if (in != out) n += conv(in, out, 1);
        return n;
    };

    int n = cfg.levels();
    std::size_t total = 2 * dense(cfg.temb_dim, cfg.temb_dim);
    total += conv(cfg.in_channels, cfg.channels_at(0), 3);
    for (int L = 0; L < n; ++L) {
        total += static_cast<std::size_t>(cfg.res_blocks[L]) *
                 block(cfg.channels_at(L), cfg.channels_at(L), cfg.temb_dim);
        if (L + 1 < n) total += conv(cfg.channels_at(L), cfg.channels_at(L + 1), 3);
    }
    for (int L = n - 1; L >= 1; --L) {
        total += conv(cfg.channels_at(L), cfg.channels_at(L - 1), 3);
        total += block(2 * cfg.channels_at(L - 1), cfg.channels_at(L - 1), cfg.temb_dim);
        total += static_cast<std::size_t>(cfg.res_blocks[L - 1] - 1) *
                 block(cfg.channels_at(L - 1), cfg.channels_at(L - 1), cfg.temb_dim);
    }
    total += gn(cfg.channels_at(0)) + conv(cfg.channels_at(0), cfg.out_channels, 3);
    return total;
}

} // namespace lidarup
