#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/rng.hpp"

namespace lidarup {

enum class MaskKind { straight, jitter, pepper, upsample };

inline const char* mask_kind_name(MaskKind k) {
    switch (k) {
        case MaskKind::straight: return "straight";
        case MaskKind::jitter: return "jitter";
        case MaskKind::pepper: return "pepper";
        case MaskKind::upsample: return "upsample";
    }
    return "?";
}

struct MaskProvenance {
    MaskKind kind = MaskKind::upsample;
    double param = 0.0;     // ratio for straight/jitter, probability for pepper
    int rate = 0;           // upsampling rate, 0 otherwise
    std::uint64_t seed = 0; // 0 for the deterministic upsampling mask

    std::string to_string() const {
        std::string s = mask_kind_name(kind);
        if (kind == MaskKind::upsample)
            s += " rate=" + std::to_string(rate);
        else
            s += " param=" + std::to_string(param) + " seed=" + std::to_string(seed);
        return s;
    }
};

// Binary inpainting mask: 1 = known/observed pixel, 0 = pixel to generate.
struct Mask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> bits;
    MaskProvenance provenance;

    Mask() = default;
    Mask(int height, int width, std::uint8_t fill = 1)
        : h(height), w(width), bits(static_cast<std::size_t>(height) * width, fill) {}

    std::size_t npx() const { return bits.size(); }
    std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * w + c; }
    bool known(int r, int c) const { return bits[idx(r, c)] != 0; }

    std::size_t known_count() const {
        return std::accumulate(bits.begin(), bits.end(), std::size_t{0});
    }
    std::size_t unknown_count() const { return npx() - known_count(); }

    void validate() const {
        if (h < 1 || w < 1 || bits.size() != static_cast<std::size_t>(h) * w)
            throw ConfigError("mask: bad shape");
        for (std::uint8_t b : bits)
            if (b > 1) throw ConfigError("mask: non-binary value");
    }
};

/// Even-interval mask: rows r with r % rate == 0 stay known, everything else
/// is generated. Deterministic, known fraction = ceil(H/rate)/H.
inline Mask upsampling_mask(int h, int w, int rate) {
    if (rate < 1) throw ConfigError("upsampling_mask: rate must be >= 1");
    if (rate > h) throw ConfigError("upsampling_mask: rate exceeds image height");
    Mask m(h, w, 0);
    for (int r = 0; r < h; r += rate)
        std::fill_n(m.bits.begin() + m.idx(r, 0), w, std::uint8_t{1});
    m.provenance = {MaskKind::upsample, 0.0, rate, 0};
    return m;
}

namespace detail {

// Partial Fisher-Yates: first `count` entries of a shuffled [0, h) range.
inline std::vector<int> choose_rows(Rng& rng, int h, int count) {
    std::vector<int> rows(h);
    std::iota(rows.begin(), rows.end(), 0);
    for (int i = 0; i < count; ++i) {
        int j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(h - i)));
        std::swap(rows[i], rows[j]);
    }
    rows.resize(count);
    std::sort(rows.begin(), rows.end());
    return rows;
}

inline int masked_row_count(int h, double ratio) {
    if (!(ratio >= 0.0) || ratio > 1.0) throw ConfigError("row mask: ratio outside [0, 1]");
    return static_cast<int>(std::lround(ratio * h));
}

} // namespace detail

/// Masks round(ratio*H) whole rows, chosen uniformly without replacement.
inline Mask straight_lines_mask(int h, int w, double ratio, std::uint64_t seed) {
    int count = detail::masked_row_count(h, ratio);
    Rng rng(seed);
    Mask m(h, w, 1);
    for (int r : detail::choose_rows(rng, h, count))
        std::fill_n(m.bits.begin() + m.idx(r, 0), w, std::uint8_t{0});
    m.provenance = {MaskKind::straight, ratio, 0, seed};
    return m;
}

/// Same row selection as straight_lines_mask, but each masked pixel is
/// independently offset by -1/0/+1 rows per column (clamped), so the line
/// traces wander. Offsets of nearby rows may collide on one cell.
inline Mask jitter_lines_mask(int h, int w, double ratio, std::uint64_t seed) {
    int count = detail::masked_row_count(h, ratio);
    Rng rng(seed);
    std::vector<int> rows = detail::choose_rows(rng, h, count);
    Mask m(h, w, 1);
    for (int r : rows) {
        for (int c = 0; c < w; ++c) {
            int delta = static_cast<int>(rng.uniform_index(3)) - 1;
            int rr = std::clamp(r + delta, 0, h - 1);
            m.bits[m.idx(rr, c)] = 0;
        }
    }
    m.provenance = {MaskKind::jitter, ratio, 0, seed};
    return m;
}

/// Independent per-pixel dropout with probability p, row-major draw order.
inline Mask pepper_mask(int h, int w, double p, std::uint64_t seed) {
    if (!(p >= 0.0) || p > 1.0) throw ConfigError("pepper_mask: probability outside [0, 1]");
    Rng rng(seed);
    Mask m(h, w, 1);
    for (std::size_t i = 0; i < m.npx(); ++i)
        if (rng.uniform() < p) m.bits[i] = 0;
    m.provenance = {MaskKind::pepper, p, 0, seed};
    return m;
}

// Which mask families the trainer draws from, and their parameter ranges.
struct TaskConfig {
    std::vector<MaskKind> kinds = {MaskKind::upsample};
    std::vector<int> rates = {4};     // used when kinds includes upsample
    double ratio_lo = 0.5;            // straight/jitter row ratio range
    double ratio_hi = 0.9;
    double pepper_lo = 0.1;           // pepper probability range
    double pepper_hi = 0.9;

    void validate() const {
        if (kinds.empty()) throw ConfigError("task: at least one mask kind must be enabled");
        for (std::size_t i = 0; i < kinds.size(); ++i)
            for (std::size_t j = i + 1; j < kinds.size(); ++j)
                if (kinds[i] == kinds[j]) throw ConfigError("task: duplicate mask kind");
        bool has_upsample =
            std::find(kinds.begin(), kinds.end(), MaskKind::upsample) != kinds.end();
        if (has_upsample && rates.empty())
            throw ConfigError("task: upsample enabled but no rates given");
        for (int r : rates)
            if (r < 1) throw ConfigError("task: upsample rate must be >= 1");
        if (!(ratio_lo > 0.0 && ratio_hi < 1.0 && ratio_lo <= ratio_hi))
            throw ConfigError("task: ratio range must satisfy 0 < lo <= hi < 1");
        if (!(pepper_lo > 0.0 && pepper_hi < 1.0 && pepper_lo <= pepper_hi))
            throw ConfigError("task: pepper range must satisfy 0 < lo <= hi < 1");
    }
};

/// Draws one training mask: a kind uniformly among the enabled ones, then its
/// parameter uniformly from the configured range (or rate list).
inline Mask sample_training_mask(const TaskConfig& cfg, int h, int w, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    MaskKind kind = cfg.kinds[rng.uniform_index(cfg.kinds.size())];
    switch (kind) {
        case MaskKind::upsample: {
            int rate = cfg.rates[rng.uniform_index(cfg.rates.size())];
            return upsampling_mask(h, w, rate);
        }
        case MaskKind::straight: {
            double ratio = rng.uniform(cfg.ratio_lo, cfg.ratio_hi);
            return straight_lines_mask(h, w, ratio, rng.next_u64());
        }
        case MaskKind::jitter: {
            double ratio = rng.uniform(cfg.ratio_lo, cfg.ratio_hi);
            return jitter_lines_mask(h, w, ratio, rng.next_u64());
        }
        case MaskKind::pepper: {
            double p = rng.uniform(cfg.pepper_lo, cfg.pepper_hi);
            return pepper_mask(h, w, p, rng.next_u64());
        }
    }
    throw ConfigError("sample_training_mask: unreachable kind");
}

} // namespace lidarup
