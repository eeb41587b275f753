#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "lidarup/dataset.hpp"
#include "lidarup/diffusion.hpp"
#include "lidarup/errors.hpp"
#include "lidarup/mask.hpp"
#include "lidarup/range_image.hpp"

namespace lidarup {

enum class InterpMethod { nearest, bilinear, bicubic };

inline const char* interp_method_name(InterpMethod m) {
    switch (m) {
        case InterpMethod::nearest: return "nearest";
        case InterpMethod::bilinear: return "bilinear";
        case InterpMethod::bicubic: return "bicubic";
    }
    return "?";
}

inline InterpMethod interp_method_from_name(const std::string& s) {
    if (s == "nearest") return InterpMethod::nearest;
    if (s == "bilinear") return InterpMethod::bilinear;
    if (s == "bicubic") return InterpMethod::bicubic;
    throw ConfigError("unknown interpolation method '" + s +
                      "' (valid: nearest, bilinear, bicubic)");
}

/// Clears the generated region: unknown pixels drop to the invalid sentinel.
inline RangeImage apply_mask(const RangeImage& img, const Mask& m) {
    if (m.h != img.height() || m.w != img.width())
        throw ConfigError("apply_mask: shape mismatch");
    RangeImage out = img;
    for (std::size_t i = 0; i < out.npx(); ++i) {
        if (!m.bits[i]) {
            out.depth[i] = 0.0f;
            out.refl[i] = 0.0f;
            out.valid[i] = 0;
        }
    }
    return out;
}

namespace interp_detail {

// Uniform Catmull-Rom segment through p1..p2 with tangent estimates from
// p0/p3, evaluated at u in [0, 1].
inline double catmull_rom(double p0, double p1, double p2, double p3, double u) {
    double a = 2.0 * p1;
    double b = p2 - p0;
    double c = 2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3;
    double d = -p0 + 3.0 * p1 - 3.0 * p2 + p3;
    return 0.5 * (a + b * u + c * u * u + d * u * u * u);
}

} // namespace interp_detail

/// Classical 1-D vertical interpolation per column, operating on denormalized
/// depth and raw reflectance. Expects the even-interval sparse layout (known
/// rows at r % rate == 0); known rows pass through untouched. Rows below the
/// last known row replicate it; Catmull-Rom uses clamped replication at the
/// borders. Interpolated depth is clamped back to [0, d_max].
inline RangeImage interpolate_baseline(const RangeImage& sparse, InterpMethod method, int rate) {
    const int H = sparse.height(), W = sparse.width();
    if (rate < 1 || rate > H) throw ConfigError("interpolate_baseline: bad rate");
    for (int r = 0; r < H; ++r) {
        if (r % rate == 0) continue;
        for (int c = 0; c < W; ++c)
            if (sparse.valid_at(r, c))
                throw ConfigError("interpolate_baseline: layout mismatch: valid pixel on a "
                                  "generated row (row " + std::to_string(r) + ")");
    }

    const int known_count = (H - 1) / rate + 1;
    const int last_known = (known_count - 1) * rate;
    // Known-row planes in physical units.
    std::vector<std::vector<double>> kd(known_count, std::vector<double>(W));
    std::vector<std::vector<double>> kr(known_count, std::vector<double>(W));
    for (int k = 0; k < known_count; ++k)
        for (int c = 0; c < W; ++c) {
            kd[k][c] = sparse.depth_m_at(k * rate, c);
            kr[k][c] = sparse.denormalize_reflectance(sparse.refl_at(k * rate, c));
        }

    RangeImage out = sparse;
    for (int r = 0; r < H; ++r) {
        if (r % rate == 0) continue;
        double dval, rval;
        for (int c = 0; c < W; ++c) {
            if (r > last_known) {
                dval = kd[known_count - 1][c];
                rval = kr[known_count - 1][c];
            } else {
                int j = r / rate;
                double u = double(r - j * rate) / rate;
                switch (method) {
                    case InterpMethod::nearest: {
                        int k = (u <= 0.5) ? j : j + 1; // tie goes to the smaller row
                        dval = kd[k][c];
                        rval = kr[k][c];
                        break;
                    }
                    case InterpMethod::bilinear: {
                        dval = (1.0 - u) * kd[j][c] + u * kd[j + 1][c];
                        rval = (1.0 - u) * kr[j][c] + u * kr[j + 1][c];
                        break;
                    }
                    case InterpMethod::bicubic: {
                        int j0 = std::max(j - 1, 0);
                        int j3 = std::min(j + 2, known_count - 1);
                        dval = interp_detail::catmull_rom(kd[j0][c], kd[j][c], kd[j + 1][c],
                                                          kd[j3][c], u);
                        rval = interp_detail::catmull_rom(kr[j0][c], kr[j][c], kr[j + 1][c],
                                                          kr[j3][c], u);
                        break;
                    }
                    default: throw ConfigError("interpolate_baseline: bad method");
                }
            }
            std::size_t k = out.idx(r, c);
            out.depth[k] = static_cast<float>(
                normalize_depth(std::clamp(dval, 0.0, sparse.config.d_max), sparse.config.d_max));
            out.refl[k] = out.normalize_reflectance(rval);
            out.valid[k] = 1;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Masked-region metrics: depth in denormalized meters, reflectance raw.
// ---------------------------------------------------------------------------
struct MaskedError {
    double depth_m = 0.0;
    double refl = 0.0;
};

namespace metric_detail {

template <class Accum>
inline MaskedError masked_reduce(const RangeImage& pred, const RangeImage& gt, const Mask& m,
                                 Accum&& accum, bool root) {
    if (pred.height() != gt.height() || pred.width() != gt.width() || m.h != gt.height() ||
        m.w != gt.width())
        throw ConfigError("masked metric: shape mismatch");
    if (pred.config.d_max != gt.config.d_max)
        throw ConfigError("masked metric: d_max mismatch");
    std::size_t unknown = m.unknown_count();
    if (unknown == 0) throw ConfigError("masked metric: mask has no generated pixels");

    double acc_d = 0.0, acc_r = 0.0;
    for (int r = 0; r < gt.height(); ++r)
        for (int c = 0; c < gt.width(); ++c) {
            if (m.known(r, c)) continue;
            acc_d += accum(pred.depth_m_at(r, c) - gt.depth_m_at(r, c));
            acc_r += accum(pred.denormalize_reflectance(pred.refl_at(r, c)) -
                           gt.denormalize_reflectance(gt.refl_at(r, c)));
        }
    MaskedError e{acc_d / unknown, acc_r / unknown};
    if (root) {
        e.depth_m = std::sqrt(e.depth_m);
        e.refl = std::sqrt(e.refl);
    }
    return e;
}

} // namespace metric_detail

/// Mean absolute error over generated (mask = 0) pixels only.
inline MaskedError masked_mae(const RangeImage& pred, const RangeImage& gt, const Mask& m) {
    return metric_detail::masked_reduce(
        pred, gt, m, [](double d) { return std::abs(d); }, false);
}

/// Root mean squared error over generated pixels only.
inline MaskedError masked_rmse(const RangeImage& pred, const RangeImage& gt, const Mask& m) {
    return metric_detail::masked_reduce(
        pred, gt, m, [](double d) { return d * d; }, true);
}

// ---------------------------------------------------------------------------
// Evaluation harness.
// ---------------------------------------------------------------------------
struct SampleMetrics {
    std::string id;
    double depth_mae = 0.0;
    double depth_rmse = 0.0;
    double refl_mae = 0.0;
    double refl_rmse = 0.0;
    double seconds = 0.0;
};

struct EvalReport {
    std::string method;
    std::string mask_desc;
    int rate = 0;
    std::vector<SampleMetrics> samples;      // successfully evaluated
    std::vector<std::string> failed_ids;     // excluded from aggregates

    double mean_of(double SampleMetrics::* field) const {
        if (samples.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& s : samples) acc += s.*field;
        return acc / samples.size();
    }
    double mean_depth_mae() const { return mean_of(&SampleMetrics::depth_mae); }
    double mean_depth_rmse() const { return mean_of(&SampleMetrics::depth_rmse); }
    double mean_refl_mae() const { return mean_of(&SampleMetrics::refl_mae); }
    double mean_refl_rmse() const { return mean_of(&SampleMetrics::refl_rmse); }

    // Deterministic report bytes: timing lives in timing_records() only.
    std::string text_table() const {
        char buf[256];
        std::string s;
        s += "method: " + method + "\n";
        s += "mask:   " + mask_desc + "\n";
        std::snprintf(buf, sizeof buf, "samples: %zu evaluated, %zu failed\n", samples.size(),
                      failed_ids.size());
        s += buf;
        std::snprintf(buf, sizeof buf, "%-12s %12s %12s %12s %12s\n", "aggregate", "depth_mae_m",
                      "depth_rmse_m", "refl_mae", "refl_rmse");
        s += buf;
        std::snprintf(buf, sizeof buf, "%-12s %12.6f %12.6f %12.6f %12.6f\n", "mean",
                      mean_depth_mae(), mean_depth_rmse(), mean_refl_mae(), mean_refl_rmse());
        s += buf;
        return s;
    }

    std::string records() const {
        std::string s = "id\tdepth_mae_m\tdepth_rmse_m\trefl_mae\trefl_rmse\n";
        char buf[256];
        for (const auto& r : samples) {
            std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%.6f\t%.6f\n", r.id.c_str(),
                          r.depth_mae, r.depth_rmse, r.refl_mae, r.refl_rmse);
            s += buf;
        }
        for (const auto& id : failed_ids) s += id + "\tfailed\n";
        return s;
    }

    std::string timing_records() const {
        std::string s = "id\tseconds\n";
        char buf[128];
        for (const auto& r : samples) {
            std::snprintf(buf, sizeof buf, "%s\t%.6f\n", r.id.c_str(), r.seconds);
            s += buf;
        }
        return s;
    }
};

// A method consumes the sparse observation and its mask; it never sees the
// ground truth. The per-sample seed keeps stochastic methods reproducible
// independently of evaluation order.
using UpsampleFn =
    std::function<RangeImage(const RangeImage& sparse, const Mask& m, std::uint64_t seed)>;

inline UpsampleFn baseline_fn(InterpMethod method, int rate) {
    return [method, rate](const RangeImage& sparse, const Mask&, std::uint64_t) {
        return interpolate_baseline(sparse, method, rate);
    };
}

/// Runs one method over the listed dataset indices with the even-interval
/// mask at `rate`. Failed samples are excluded and counted.
inline EvalReport evaluate(const std::string& method_name, const UpsampleFn& fn,
                           const Dataset& data, const std::vector<std::size_t>& indices, int rate,
                           std::uint64_t seed) {
    if (indices.empty()) throw ConfigError("evaluate: empty split");
    EvalReport report;
    report.method = method_name;
    report.rate = rate;
    for (std::size_t pos = 0; pos < indices.size(); ++pos) {
        std::size_t i = indices[pos];
        RangeImage gt = data.get(i);
        Mask m = upsampling_mask(gt.height(), gt.width(), rate);
        if (pos == 0) report.mask_desc = m.provenance.to_string();
        RangeImage sparse = apply_mask(gt, m);
        SampleMetrics sm;
        sm.id = data.id(i);
        try {
            auto t0 = std::chrono::steady_clock::now();
            RangeImage pred =
                method_name == "gt" ? gt : fn(sparse, m, derive_seed(seed, std::uint64_t(i)));
            sm.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                             .count();
            MaskedError mae = masked_mae(pred, gt, m);
            MaskedError rmse = masked_rmse(pred, gt, m);
            sm.depth_mae = mae.depth_m;
            sm.depth_rmse = rmse.depth_m;
            sm.refl_mae = mae.refl;
            sm.refl_rmse = rmse.refl;
            report.samples.push_back(std::move(sm));
        } catch (const Error&) {
            report.failed_ids.push_back(sm.id);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Inference-speed benchmark.
// ---------------------------------------------------------------------------
struct BenchRow {
    int steps = 0;
    double median_s = 0.0;
    double mean_s = 0.0;
    double stdev_s = 0.0;
    double fps = 0.0;
    int runs = 0;
};

/// Times conditional sampling at each step count on one image, medians over
/// `runs` timed repetitions after `warmup` discarded ones. Samples run
/// strictly one at a time.
template <class DenoiserFn>
inline std::vector<BenchRow> bench_sampler(DenoiserFn&& den, const RangeImage& observed,
                                           const Mask& m, const NoiseSchedule& sched,
                                           const std::vector<int>& steps_list, int warmup,
                                           int runs, double eta, std::uint64_t seed) {
    if (steps_list.empty()) throw ConfigError("bench: empty steps list");
    if (runs < 1) throw ConfigError("bench: runs must be >= 1");
    std::vector<BenchRow> rows;
    TensorF obs = to_tensor<float>(observed);
    for (int steps : steps_list) {
        SamplerConfig cfg{steps, eta, seed};
        std::vector<double> times;
        for (int r = 0; r < warmup + runs; ++r) {
            cfg.seed = derive_seed(seed, std::uint64_t(r));
            auto t0 = std::chrono::steady_clock::now();
            TensorF out = conditional_sample(obs, m, den, sched, cfg);
            double dt =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (out.data.empty()) throw NumericError("bench: sampler returned nothing");
            if (r >= warmup) times.push_back(dt);
        }
        std::sort(times.begin(), times.end());
        BenchRow row;
        row.steps = steps;
        row.runs = runs;
        row.median_s = times[times.size() / 2];
        for (double t : times) row.mean_s += t;
        row.mean_s /= times.size();
        for (double t : times) row.stdev_s += (t - row.mean_s) * (t - row.mean_s);
        row.stdev_s = times.size() > 1 ? std::sqrt(row.stdev_s / (times.size() - 1)) : 0.0;
        row.fps = 1.0 / row.median_s;
        rows.push_back(row);
    }
    return rows;
}

inline std::string bench_table(const std::vector<BenchRow>& rows) {
    char buf[160];
    std::string s;
    std::snprintf(buf, sizeof buf, "%8s %14s %14s %14s %10s %6s\n", "steps", "median_s", "mean_s",
                  "stdev_s", "fps", "runs");
    s += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%8d %14.4f %14.4f %14.4f %10.3f %6d\n", r.steps,
                      r.median_s, r.mean_s, r.stdev_s, r.fps, r.runs);
        s += buf;
    }
    return s;
}

} // namespace lidarup
