#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/mask.hpp"
#include "lidarup/range_image.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace lidarup {

// Partitioned parallel loop. Every index is processed by exactly one thread
// with its own fixed-order inner arithmetic, so results are bit-identical
// for any thread count.
template <class F>
inline void parallel_for(int n, F&& fn) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) fn(i);
#else
    for (int i = 0; i < n; ++i) fn(i);
#endif
}

// Dense C x H x W tensor, channel planes contiguous in row-major order.
template <class T>
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int channels, int height, int width)
        : c(channels), h(height), w(width),
          data(static_cast<std::size_t>(channels) * height * width, T{0}) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
    std::size_t size() const { return data.size(); }

    T* plane(int ci) { return data.data() + static_cast<std::size_t>(ci) * plane_size(); }
    const T* plane(int ci) const {
        return data.data() + static_cast<std::size_t>(ci) * plane_size();
    }

    T& at(int ci, int r, int col) { return plane(ci)[static_cast<std::size_t>(r) * w + col]; }
    T at(int ci, int r, int col) const {
        return plane(ci)[static_cast<std::size_t>(r) * w + col];
    }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(c, h, w);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;

// Depth + reflectance planes of a range image as a 2-channel tensor.
template <class T = float>
inline Tensor<T> to_tensor(const RangeImage& img) {
    Tensor<T> t(2, img.height(), img.width());
    for (std::size_t i = 0; i < img.npx(); ++i) {
        t.data[i] = static_cast<T>(img.depth[i]);
        t.data[img.npx() + i] = static_cast<T>(img.refl[i]);
    }
    return t;
}

// Rebuilds a range image from a 2-channel tensor; validity of generated
// pixels is the caller's choice via `generated_valid`.
template <class T>
inline RangeImage from_tensor(const Tensor<T>& t, const RangeImage& like, const Mask* mask = nullptr,
                              bool generated_valid = true) {
    if (t.c != 2 || t.h != like.height() || t.w != like.width())
        throw ConfigError("from_tensor: shape mismatch");
    RangeImage out = like;
    for (std::size_t i = 0; i < out.npx(); ++i) {
        out.depth[i] = static_cast<float>(t.data[i]);
        out.refl[i] = static_cast<float>(t.data[out.npx() + i]);
        if (mask != nullptr)
            out.valid[i] = mask->bits[i] ? like.valid[i] : (generated_valid ? 1 : 0);
    }
    return out;
}

} // namespace lidarup
