#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/range_image.hpp"
#include "lidarup/rng.hpp"

namespace lidarup {

// Procedural scene generator: a ground plane plus boxes, vertical cylinders
// and walls placed on a ring around the sensor. Stands in for drive data at
// desk scale.
struct SceneConfig {
    double sensor_height = 1.8;
    bool ground = true;
    int boxes = 6;
    int cylinders = 4;
    int walls = 2;
    double box_min = 0.5; // edge length range, meters
    double box_max = 3.0;
    double cyl_radius_min = 0.1;
    double cyl_radius_max = 0.6;
    double cyl_height_min = 0.5;
    double cyl_height_max = 3.0;
    double wall_length_min = 4.0;
    double wall_length_max = 12.0;
    double wall_height_min = 1.0;
    double wall_height_max = 3.0;
    double wall_thickness = 0.2;
    double place_min = 3.0; // radial placement ring
    double place_max = 25.0;
    double refl_lo = 0.05; // per-object reflectance range
    double refl_hi = 0.95;
    double noise_sigma = 0.02; // range noise, meters

    void validate() const {
        if (boxes < 0 || cylinders < 0 || walls < 0)
            throw ConfigError("scene: object counts must be nonnegative");
        if (!(noise_sigma >= 0.0)) throw ConfigError("scene: noise sigma must be nonnegative");
        if (!(sensor_height > 0.0)) throw ConfigError("scene: sensor height must be positive");
        if (!(box_min > 0.0 && box_max >= box_min) ||
            !(cyl_radius_min > 0.0 && cyl_radius_max >= cyl_radius_min) ||
            !(cyl_height_min > 0.0 && cyl_height_max >= cyl_height_min) ||
            !(wall_length_min > 0.0 && wall_length_max >= wall_length_min) ||
            !(wall_height_min > 0.0 && wall_height_max >= wall_height_min) ||
            !(wall_thickness > 0.0))
            throw ConfigError("scene: size ranges must be positive and ordered");
        if (!(place_min > 0.0 && place_max >= place_min))
            throw ConfigError("scene: placement ring must be positive and ordered");
        if (!(refl_lo >= 0.0 && refl_hi <= 1.0 && refl_lo <= refl_hi))
            throw ConfigError("scene: reflectance range must lie inside [0, 1]");
    }
};

// Axis-aligned box, sensor-frame coordinates.
struct SceneBox {
    double lo[3];
    double hi[3];
    float refl;
};

// Vertical cylinder side surface (caps ignored; never the nearest surface in
// these sensor-level scenes).
struct SceneCylinder {
    double cx, cy, r, z0, z1;
    float refl;
};

// Geometry a raycast consumes; walls are boxes.
struct Scene {
    bool ground = true;
    double sensor_height = 1.8; // ground plane sits at z = -sensor_height
    float ground_refl = 0.5f;
    std::vector<SceneBox> boxes;
    std::vector<SceneCylinder> cylinders;
};

namespace synth_detail {

// Slab test against a ray from the origin; returns entry distance or +inf.
inline double ray_box(const double dir[3], const SceneBox& b) {
    double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0.0) {
            if (0.0 < b.lo[a] || 0.0 > b.hi[a]) return std::numeric_limits<double>::infinity();
            continue;
        }
        double inv = 1.0 / dir[a];
        double t0 = b.lo[a] * inv, t1 = b.hi[a] * inv;
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return std::numeric_limits<double>::infinity();
    }
    return tmin > 0.0 ? tmin : std::numeric_limits<double>::infinity();
}

inline double ray_cylinder(const double dir[3], const SceneCylinder& c) {
    double a = dir[0] * dir[0] + dir[1] * dir[1];
    if (a == 0.0) return std::numeric_limits<double>::infinity();
    double b = -2.0 * (dir[0] * c.cx + dir[1] * c.cy);
    double q = c.cx * c.cx + c.cy * c.cy - c.r * c.r;
    double disc = b * b - 4.0 * a * q;
    if (disc < 0.0) return std::numeric_limits<double>::infinity();
    double sq = std::sqrt(disc);
    for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t <= 0.0) continue;
        double z = t * dir[2];
        if (z >= c.z0 && z <= c.z1) return t;
    }
    return std::numeric_limits<double>::infinity();
}

} // namespace synth_detail

/// Draws object placements and reflectances for a config. Determined entirely
/// by (config, seed).
inline Scene build_scene(const SceneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, "scene"));
    const double h = cfg.sensor_height;

    Scene scene;
    scene.ground = cfg.ground;
    scene.sensor_height = h;

    auto ring_point = [&](double& x, double& y) {
        double ang = rng.uniform(0.0, kTwoPi);
        double rad = rng.uniform(cfg.place_min, cfg.place_max);
        x = rad * std::cos(ang);
        y = rad * std::sin(ang);
    };
    for (int i = 0; i < cfg.boxes; ++i) {
        double x, y;
        ring_point(x, y);
        double ex = rng.uniform(cfg.box_min, cfg.box_max) * 0.5;
        double ey = rng.uniform(cfg.box_min, cfg.box_max) * 0.5;
        double ez = rng.uniform(cfg.box_min, cfg.box_max);
        float refl = static_cast<float>(rng.uniform(cfg.refl_lo, cfg.refl_hi));
        scene.boxes.push_back(SceneBox{{x - ex, y - ey, -h}, {x + ex, y + ey, -h + ez}, refl});
    }
    for (int i = 0; i < cfg.cylinders; ++i) {
        double x, y;
        ring_point(x, y);
        double r = rng.uniform(cfg.cyl_radius_min, cfg.cyl_radius_max);
        double ht = rng.uniform(cfg.cyl_height_min, cfg.cyl_height_max);
        float refl = static_cast<float>(rng.uniform(cfg.refl_lo, cfg.refl_hi));
        scene.cylinders.push_back(SceneCylinder{x, y, r, -h, -h + ht, refl});
    }
    for (int i = 0; i < cfg.walls; ++i) {
        double x, y;
        ring_point(x, y);
        double len = rng.uniform(cfg.wall_length_min, cfg.wall_length_max) * 0.5;
        double hw = cfg.wall_thickness * 0.5;
        double ht = rng.uniform(cfg.wall_height_min, cfg.wall_height_max);
        float refl = static_cast<float>(rng.uniform(cfg.refl_lo, cfg.refl_hi));
        bool along_x = rng.uniform() < 0.5;
        double ex = along_x ? len : hw;
        double ey = along_x ? hw : len;
        scene.boxes.push_back(SceneBox{{x - ex, y - ey, -h}, {x + ex, y + ey, -h + ht}, refl});
    }
    scene.ground_refl = static_cast<float>(rng.uniform(cfg.refl_lo, cfg.refl_hi));
    return scene;
}

/// Casts one ray per bin center, keeps the nearest hit within d_max, adds
/// Gaussian range noise, stores the hit object's reflectance. Misses stay
/// invalid pixels.
inline RangeImage raycast_scene(const Scene& scene, const ProjectionConfig& proj,
                                double noise_sigma, std::uint64_t seed) {
    using namespace synth_detail;
    proj.validate();
    Rng rng(derive_seed(seed, "noise"));
    const double h = scene.sensor_height;

    RangeImage img(proj);
    for (int r = 0; r < proj.height; ++r) {
        double el = proj.elevation_of_row(r);
        double ce = std::cos(el), se = std::sin(el);
        for (int c = 0; c < proj.width; ++c) {
            double az = proj.azimuth_of_col(c);
            double dir[3] = {ce * std::cos(az), ce * std::sin(az), se};

            double best = std::numeric_limits<double>::infinity();
            float refl = 0.0f;
            if (scene.ground && dir[2] < 0.0) {
                double t = -h / dir[2];
                if (t < best) {
                    best = t;
                    refl = scene.ground_refl;
                }
            }
            for (const SceneBox& b : scene.boxes) {
                double t = ray_box(dir, b);
                if (t < best) {
                    best = t;
                    refl = b.refl;
                }
            }
            for (const SceneCylinder& cy : scene.cylinders) {
                double t = ray_cylinder(dir, cy);
                if (t < best) {
                    best = t;
                    refl = cy.refl;
                }
            }

            if (!(best <= proj.d_max)) continue;
            double d = best;
            if (noise_sigma > 0.0) d += noise_sigma * rng.normal();
            d = std::clamp(d, 1e-3, proj.d_max);
            std::size_t k = img.idx(r, c);
            img.depth[k] = static_cast<float>(normalize_depth(d, proj.d_max));
            img.refl[k] = refl;
            img.valid[k] = 1;
        }
    }
    return img;
}

/// One procedurally generated scan; deterministic in (scene, projection, seed).
inline RangeImage synth_scan(const SceneConfig& cfg, const ProjectionConfig& proj,
                             std::uint64_t seed) {
    return raycast_scene(build_scene(cfg, seed), proj, cfg.noise_sigma, seed);
}

} // namespace lidarup
