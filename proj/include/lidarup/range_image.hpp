#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lidarup/errors.hpp"

namespace lidarup {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

struct Vec3 {
    float x = 0.0f;
    float y = 0.0f;
    float z = 0.0f;
};

// Sensor-frame point cloud, coordinates in meters, reflectance unitless in [0,1].
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<float> reflectance;

    std::size_t size() const { return points.size(); }

    void validate() const {
        if (points.size() != reflectance.size())
            throw ConfigError("point cloud: points and reflectance lengths differ");
        for (const Vec3& p : points)
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
                throw RangeError("point cloud: non-finite coordinate");
    }
};

// Equirectangular grid geometry.
//
// Column convention (fixed so golden values are reproducible): azimuth
// atan2(y, x) = 0, i.e. the sensor +x axis, maps to column W/2, and azimuth
// increases toward column 0 (leftward).  Row 0 is the topmost beam at fov_up.
struct ProjectionConfig {
    int height = 64;
    int width = 1024;
    double fov_up_deg = 3.0;
    double fov_down_deg = -25.0;
    double d_max = 80.0;

    void validate() const {
        if (height < 2 || width < 2)
            throw ConfigError("projection: height and width must be >= 2");
        if (!(d_max > 0.0))
            throw ConfigError("projection: d_max must be positive");
        if (!(fov_up_deg > fov_down_deg))
            throw ConfigError("projection: fov_up must exceed fov_down");
    }

    double fov_span_deg() const { return fov_up_deg - fov_down_deg; }

    // Bin centers, radians.
    double elevation_of_row(int r) const {
        return deg2rad(fov_up_deg - (r + 0.5) * fov_span_deg() / height);
    }
    double azimuth_of_col(int c) const { return (0.5 - (c + 0.5) / width) * kTwoPi; }

    // floor + clamp: out-of-fov elevations land in the edge rows.
    int row_of_elevation(double elev_rad) const {
        double f = (fov_up_deg - rad2deg(elev_rad)) / fov_span_deg() * height;
        int r = static_cast<int>(std::floor(f));
        return std::clamp(r, 0, height - 1);
    }
    int col_of_azimuth(double az_rad) const {
        int c = static_cast<int>(std::floor((0.5 - az_rad / kTwoPi) * width));
        return ((c % width) + width) % width;
    }

    bool operator==(const ProjectionConfig&) const = default;
};

/// Log depth normalization: log(d+1)/log(d_max+1), mapping [0, d_max] onto [0, 1].
inline double normalize_depth(double d, double d_max) {
    if (!(d_max > 0.0)) throw ConfigError("normalize_depth: d_max must be positive");
    if (!(d >= 0.0) || d > d_max) throw RangeError("normalize_depth: depth outside [0, d_max]");
    return std::log1p(d) / std::log1p(d_max);
}

/// Inverse of normalize_depth: (d_max+1)^v - 1.
inline double denormalize_depth(double v, double d_max) {
    if (!(d_max > 0.0)) throw ConfigError("denormalize_depth: d_max must be positive");
    if (!(v >= 0.0) || v > 1.0) throw RangeError("denormalize_depth: value outside [0, 1]");
    return std::expm1(v * std::log1p(d_max));
}

// Two-channel range image. Channels are stored normalized to [0,1]; pixels
// without a return are marked invalid and carry 0 in both channels.
struct RangeImage {
    ProjectionConfig config;
    // Dataset-level reflectance normalization (identity by default).
    double refl_min = 0.0;
    double refl_max = 1.0;
    std::vector<float> depth;   // H*W, row-major
    std::vector<float> refl;    // H*W, row-major
    std::vector<std::uint8_t> valid; // H*W, row-major

    RangeImage() = default;
    explicit RangeImage(const ProjectionConfig& cfg) : config(cfg) {
        cfg.validate();
        depth.assign(npx(), 0.0f);
        refl.assign(npx(), 0.0f);
        valid.assign(npx(), 0);
    }

    int height() const { return config.height; }
    int width() const { return config.width; }
    std::size_t npx() const {
        return static_cast<std::size_t>(config.height) * static_cast<std::size_t>(config.width);
    }
    std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * config.width + c; }

    float depth_at(int r, int c) const { return depth[idx(r, c)]; }
    float refl_at(int r, int c) const { return refl[idx(r, c)]; }
    bool valid_at(int r, int c) const { return valid[idx(r, c)] != 0; }

    double depth_m_at(int r, int c) const {
        return denormalize_depth(depth[idx(r, c)], config.d_max);
    }

    float normalize_reflectance(double raw) const {
        double denom = refl_max - refl_min;
        double v = denom > 0.0 ? (raw - refl_min) / denom : 0.0;
        return static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    double denormalize_reflectance(double v) const { return refl_min + v * (refl_max - refl_min); }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (std::uint8_t v : valid) n += v;
        return n;
    }

    void validate() const {
        config.validate();
        if (depth.size() != npx() || refl.size() != npx() || valid.size() != npx())
            throw ConfigError("range image: plane size mismatch");
        if (!(refl_max > refl_min)) throw ConfigError("range image: refl_max must exceed refl_min");
        for (std::size_t i = 0; i < npx(); ++i) {
            if (!(depth[i] >= 0.0f) || depth[i] > 1.0f || !(refl[i] >= 0.0f) || refl[i] > 1.0f)
                throw RangeError("range image: channel value outside [0, 1]");
        }
    }
};

struct ProjectionStats {
    std::size_t dropped_far = 0;  // range beyond d_max
    std::size_t dropped_zero = 0; // exactly at the origin, direction undefined
};

struct ProjectionResult {
    RangeImage image;
    ProjectionStats stats;
};

/// Spherical projection of a point cloud onto the angular grid. When several
/// points fall into one bin the nearest return wins.
inline ProjectionResult project(const PointCloud& cloud, const ProjectionConfig& cfg,
                                double refl_min = 0.0, double refl_max = 1.0) {
    cloud.validate();
    cfg.validate();

    ProjectionResult out;
    out.image = RangeImage(cfg);
    out.image.refl_min = refl_min;
    out.image.refl_max = refl_max;

    std::vector<double> best(out.image.npx(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        double d = std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z);
        if (d == 0.0) {
            ++out.stats.dropped_zero;
            continue;
        }
        if (d > cfg.d_max) {
            ++out.stats.dropped_far;
            continue;
        }
        int r = cfg.row_of_elevation(std::asin(std::clamp(double(p.z) / d, -1.0, 1.0)));
        int c = cfg.col_of_azimuth(std::atan2(double(p.y), double(p.x)));
        std::size_t k = out.image.idx(r, c);
        if (d < best[k]) {
            best[k] = d;
            out.image.depth[k] = static_cast<float>(normalize_depth(d, cfg.d_max));
            out.image.refl[k] = out.image.normalize_reflectance(cloud.reflectance[i]);
            out.image.valid[k] = 1;
        }
    }
    return out;
}

/// Inverse mapping: one point per valid pixel, emitted at the bin-center
/// direction and the denormalized range.
inline PointCloud unproject(const RangeImage& img) {
    PointCloud cloud;
    cloud.points.reserve(img.valid_count());
    cloud.reflectance.reserve(img.valid_count());
    for (int r = 0; r < img.height(); ++r) {
        double el = img.config.elevation_of_row(r);
        double ce = std::cos(el), se = std::sin(el);
        for (int c = 0; c < img.width(); ++c) {
            if (!img.valid_at(r, c)) continue;
            double d = img.depth_m_at(r, c);
            double az = img.config.azimuth_of_col(c);
            cloud.points.push_back(Vec3{static_cast<float>(d * ce * std::cos(az)),
                                        static_cast<float>(d * ce * std::sin(az)),
                                        static_cast<float>(d * se)});
            cloud.reflectance.push_back(
                static_cast<float>(img.denormalize_reflectance(img.refl_at(r, c))));
        }
    }
    return cloud;
}

} // namespace lidarup
