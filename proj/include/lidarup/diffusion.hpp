#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/mask.hpp"
#include "lidarup/rng.hpp"
#include "lidarup/schedule.hpp"
#include "lidarup/tensor.hpp"

namespace lidarup {

struct SamplerConfig {
    int steps = 8;
    double eta = 0.0; // 0 = deterministic reverse updates
    std::uint64_t seed = 0;

    void validate(const NoiseSchedule& sched) const {
        if (steps < 1) throw ConfigError("sampler: steps must be >= 1");
        if (steps > sched.t_train)
            throw ConfigError("sampler: steps exceed the training step count");
        if (!(eta >= 0.0) || eta > 1.0) throw ConfigError("sampler: eta outside [0, 1]");
    }
};

/// Equally spaced strictly decreasing timesteps from t_train down to 0,
/// endpoints always included; length steps+1.
inline std::vector<int> sampling_timesteps(int t_train, int steps) {
    if (steps < 1 || steps > t_train)
        throw ConfigError("sampling_timesteps: steps must be in [1, t_train]");
    std::vector<int> ts(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i)
        ts[i] = static_cast<int>(std::lround(double(t_train) * (steps - i) / steps));
    return ts;
}

template <class T>
inline Tensor<T> gaussian_tensor(int c, int h, int w, Rng& rng) {
    Tensor<T> t(c, h, w);
    for (T& v : t.data) v = static_cast<T>(rng.normal());
    return t;
}

/// Forward diffusion draw: z_t = sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps.
template <class T>
inline Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                          const NoiseSchedule& sched) {
    if (t < 1 || t > sched.t_train) throw RangeError("q_sample: t outside [1, t_train]");
    if (!x0.same_shape(eps)) throw ConfigError("q_sample: shape mismatch");
    T a = static_cast<T>(std::sqrt(sched.ab(t)));
    T b = static_cast<T>(std::sqrt(1.0 - sched.ab(t)));
    Tensor<T> z = x0;
    for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] = a * x0.data[i] + b * eps.data[i];
    return z;
}

/// m * observed + (1 - m) * latent, elementwise per channel. Known pixels are
/// copied bit-exactly from the observed image.
template <class T>
inline Tensor<T> blend(const Tensor<T>& observed, const Tensor<T>& latent, const Mask& m) {
    if (!observed.same_shape(latent)) throw ConfigError("blend: shape mismatch");
    if (observed.h != m.h || observed.w != m.w) throw ConfigError("blend: mask shape mismatch");
    Tensor<T> out = latent;
    std::size_t n = m.npx();
    for (int ci = 0; ci < observed.c; ++ci) {
        const T* src = observed.plane(ci);
        T* dst = out.data.data() + static_cast<std::size_t>(ci) * n;
        for (std::size_t i = 0; i < n; ++i)
            if (m.bits[i]) dst[i] = src[i];
    }
    return out;
}

/// Mean squared error over unknown pixels only (both channels). Predictions on
/// known pixels never contribute.
template <class T>
inline double masked_loss(const Tensor<T>& pred, const Tensor<T>& truth, const Mask& m) {
    if (!pred.same_shape(truth)) throw ConfigError("masked_loss: shape mismatch");
    if (pred.h != m.h || pred.w != m.w) throw ConfigError("masked_loss: mask shape mismatch");
    std::size_t unknown = m.unknown_count();
    if (unknown == 0) throw ConfigError("masked_loss: mask has no unknown pixels");
    double acc = 0.0;
    std::size_t n = m.npx();
    for (int ci = 0; ci < pred.c; ++ci) {
        const T* p = pred.plane(ci);
        const T* q = truth.plane(ci);
        for (std::size_t i = 0; i < n; ++i) {
            if (m.bits[i]) continue;
            double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
            acc += d * d;
        }
    }
    return acc / (static_cast<double>(unknown) * pred.c);
}

/// One DDIM-family reverse update on a single value.
/// x0_pred = (z - sqrt(1-ab_t) * eps) / sqrt(ab_t), clipped to [-1, 2];
/// sigma = eta * sqrt((1-ab_prev)/(1-ab_t)) * sqrt(1 - ab_t/ab_prev);
/// z_prev = sqrt(ab_prev) * x0_pred + sqrt(1-ab_prev-sigma^2) * eps + sigma * noise.
/// With ab_prev = 1 (t_prev = 0) this degenerates to x0_pred.
template <class T>
inline T reverse_step_value(T z, T eps, double ab_t, double ab_prev, double eta, T noise) {
    double x0 = (static_cast<double>(z) - std::sqrt(1.0 - ab_t) * static_cast<double>(eps)) /
                std::sqrt(ab_t);
    x0 = std::clamp(x0, -1.0, 2.0);
    double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) *
                   std::sqrt(std::max(0.0, 1.0 - ab_t / ab_prev));
    double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    return static_cast<T>(std::sqrt(ab_prev) * x0 + dir * static_cast<double>(eps) +
                          sigma * static_cast<double>(noise));
}

/// Elementwise reverse update from timestep t to t_prev. `noise` may be null
/// when eta == 0 or t_prev == 0.
template <class T>
inline Tensor<T> reverse_step(const Tensor<T>& z_t, const Tensor<T>& eps_pred, int t, int t_prev,
                              const NoiseSchedule& sched, double eta,
                              const Tensor<T>* noise = nullptr) {
    if (t_prev >= t) throw ConfigError("reverse_step: t_prev must be below t");
    if (t < 1 || t > sched.t_train || t_prev < 0)
        throw RangeError("reverse_step: timestep outside schedule");
    if (!z_t.same_shape(eps_pred)) throw ConfigError("reverse_step: shape mismatch");
    double ab_t = sched.ab(t);
    double ab_prev = sched.ab(t_prev);
    bool stochastic = eta > 0.0 && t_prev > 0;
    if (stochastic && (noise == nullptr || !noise->same_shape(z_t)))
        throw ConfigError("reverse_step: eta > 0 requires a noise tensor");
    Tensor<T> out(z_t.c, z_t.h, z_t.w);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        T n = stochastic ? noise->data[i] : T{0};
        out.data[i] = reverse_step_value(z_t.data[i], eps_pred.data[i], ab_t, ab_prev,
                                         stochastic ? eta : 0.0, n);
    }
    return out;
}

namespace detail {

template <class T>
inline void check_observed(const Tensor<T>& observed, const Mask& m) {
    if (observed.c != 2) throw ConfigError("conditional sample: observed must have 2 channels");
    if (observed.h != m.h || observed.w != m.w)
        throw ConfigError("conditional sample: mask shape mismatch");
    if (m.unknown_count() == 0)
        throw ConfigError("conditional sample: mask has no pixels to generate");
    std::size_t n = m.npx();
    for (int ci = 0; ci < 2; ++ci) {
        const T* p = observed.plane(ci);
        for (std::size_t i = 0; i < n; ++i) {
            if (!m.bits[i]) continue;
            double v = static_cast<double>(p[i]);
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw RangeError("conditional sample: observed known pixel outside [0, 1]");
        }
    }
}

} // namespace detail

/// Masked-blending conditional reverse diffusion. At every step the known
/// pixels of the network input are re-initialized from the observed image;
/// the final output keeps them bit-exactly and clamps generated pixels to
/// [0, 1]. `denoiser(u, mask, t)` predicts the forward noise.
template <class T, class Denoiser>
inline Tensor<T> conditional_sample(const Tensor<T>& observed, const Mask& m, Denoiser&& denoiser,
                                    const NoiseSchedule& sched, const SamplerConfig& cfg) {
    cfg.validate(sched);
    detail::check_observed(observed, m);

    Rng rng(cfg.seed);
    Tensor<T> z = gaussian_tensor<T>(2, observed.h, observed.w, rng);
    std::vector<int> ts = sampling_timesteps(sched.t_train, cfg.steps);
    for (int i = 0; i < cfg.steps; ++i) {
        int t = ts[i], t_prev = ts[i + 1];
        Tensor<T> u = blend(observed, z, m);
        Tensor<T> eps = denoiser(u, m, t);
        if (!eps.same_shape(z)) throw ConfigError("conditional sample: denoiser shape mismatch");
        if (cfg.eta > 0.0 && t_prev > 0) {
            Tensor<T> noise = gaussian_tensor<T>(2, observed.h, observed.w, rng);
            z = reverse_step(z, eps, t, t_prev, sched, cfg.eta, &noise);
        } else {
            z = reverse_step(z, eps, t, t_prev, sched, 0.0);
        }
    }

    Tensor<T> out(2, observed.h, observed.w);
    std::size_t n = m.npx();
    for (int ci = 0; ci < 2; ++ci) {
        const T* obs = observed.plane(ci);
        const T* gen = z.data.data() + static_cast<std::size_t>(ci) * n;
        T* dst = out.data.data() + static_cast<std::size_t>(ci) * n;
        for (std::size_t i = 0; i < n; ++i)
            dst[i] = m.bits[i] ? obs[i] : std::clamp(gen[i], T{0}, T{1});
    }
    return out;
}

/// RangeImage front-end: known pixels keep the observed image's validity,
/// generated pixels are marked valid.
template <class Denoiser>
inline RangeImage conditional_sample_image(const RangeImage& observed, const Mask& m,
                                           Denoiser&& denoiser, const NoiseSchedule& sched,
                                           const SamplerConfig& cfg) {
    TensorF obs = to_tensor<float>(observed);
    TensorF out = conditional_sample(obs, m, std::forward<Denoiser>(denoiser), sched, cfg);
    return from_tensor(out, observed, &m, /*generated_valid=*/true);
}

// One supervised example: the blended network input, its mask, the drawn
// timestep and the true noise the network must recover.
template <class T>
struct TrainingExample {
    Tensor<T> net_input; // blend(x0, z_t, mask), 2 channels
    Mask mask;
    int t = 0;
    Tensor<T> eps;
};

/// Draws mask, timestep (uniform in [1, t_train]) and noise, then assembles
/// the blended input the trainer feeds to the denoiser.
template <class T>
inline TrainingExample<T> make_training_example(const Tensor<T>& x0, const TaskConfig& task,
                                                const NoiseSchedule& sched, std::uint64_t seed) {
    if (x0.c != 2) throw ConfigError("training example: x0 must have 2 channels");
    Rng rng(seed);
    TrainingExample<T> ex;
    ex.mask = sample_training_mask(task, x0.h, x0.w, rng.next_u64());
    ex.t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(sched.t_train)));
    ex.eps = gaussian_tensor<T>(2, x0.h, x0.w, rng);
    Tensor<T> z = q_sample(x0, ex.t, ex.eps, sched);
    ex.net_input = blend(x0, z, ex.mask);
    return ex;
}

} // namespace lidarup
