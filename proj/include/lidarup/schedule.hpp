#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/rng.hpp"

namespace lidarup {

enum class ScheduleKind { cosine, linear };

inline const char* schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::cosine ? "cosine" : "linear";
}

inline ScheduleKind schedule_kind_from_name(const std::string& s) {
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "linear") return ScheduleKind::linear;
    throw ConfigError("unknown schedule kind '" + s + "' (expected cosine or linear)");
}

// Discrete diffusion schedule: cumulative signal fraction alpha_bar[t] for
// t = 0..t_train, alpha_bar[0] = 1, strictly decreasing, near zero at the end.
struct NoiseSchedule {
    int t_train = 0;
    ScheduleKind kind = ScheduleKind::cosine;
    std::vector<double> alpha_bar;

    double ab(int t) const { return alpha_bar[static_cast<std::size_t>(t)]; }

    void validate() const {
        if (t_train < 2) throw ConfigError("schedule: t_train must be >= 2");
        if (alpha_bar.size() != static_cast<std::size_t>(t_train) + 1)
            throw ConfigError("schedule: alpha_bar length mismatch");
        if (alpha_bar[0] != 1.0) throw ConfigError("schedule: alpha_bar[0] must be 1");
        for (int t = 1; t <= t_train; ++t) {
            if (!(alpha_bar[t] > 0.0) || alpha_bar[t] > 1.0)
                throw ConfigError("schedule: alpha_bar outside (0, 1]");
            if (!(alpha_bar[t] < alpha_bar[t - 1]))
                throw ConfigError("schedule: alpha_bar not strictly decreasing");
        }
        if (!(alpha_bar[t_train] < 0.01))
            throw ConfigError("schedule: terminal alpha_bar must be below 0.01 "
                              "(got " + std::to_string(alpha_bar[t_train]) + ")");
    }

    // Identifies the schedule a checkpoint was trained with.
    std::uint64_t fingerprint() const {
        std::uint64_t h = fnv1a64(schedule_kind_name(kind));
        h = mix64(h ^ static_cast<std::uint64_t>(t_train));
        for (double v : alpha_bar) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = mix64(h ^ bits);
        }
        return h;
    }

    // Index whose alpha_bar is closest to the requested value.
    int nearest_index(double target) const {
        int best = 1;
        double best_err = std::abs(alpha_bar[1] - target);
        for (int t = 2; t <= t_train; ++t) {
            double e = std::abs(alpha_bar[t] - target);
            if (e < best_err) {
                best_err = e;
                best = t;
            }
        }
        return best;
    }
};

/// cosine: alpha_bar(t) = f(t)/f(0) with f(t) = cos^2(((t/T + s)/(1+s)) * pi/2),
/// s = 0.008. The raw curve collapses to ~1e-9 at the final index, which makes
/// the t = T endpoint of a sparse sampling ladder numerically degenerate (the
/// signal reconstruction divides by sqrt(alpha_bar)); the tail is therefore
/// held above an exponential floor ending at 5e-3. The floor only engages in
/// the last few percent of the schedule and keeps every invariant intact.
/// linear: per-step beta interpolated from 1e-4 to 2e-2.
inline NoiseSchedule build_schedule(int t_train, ScheduleKind kind) {
    if (t_train < 2) throw ConfigError("build_schedule: t_train must be >= 2");

    NoiseSchedule s;
    s.t_train = t_train;
    s.kind = kind;
    s.alpha_bar.resize(static_cast<std::size_t>(t_train) + 1);
    s.alpha_bar[0] = 1.0;

    if (kind == ScheduleKind::cosine) {
        const double shift = 0.008;
        const double terminal = 5e-3;
        const double pi_half = 1.57079632679489661923132169163975144;
        auto f = [&](double t) {
            double x = ((t / t_train + shift) / (1.0 + shift)) * pi_half;
            double c = std::cos(x);
            return c * c;
        };
        double f0 = f(0.0);
        for (int t = 1; t <= t_train; ++t) {
            double raw = f(static_cast<double>(t)) / f0;
            double floor = std::pow(terminal, static_cast<double>(t) / t_train);
            // max of two strictly decreasing curves stays strictly decreasing
            s.alpha_bar[t] = std::max(raw, floor);
        }
    } else {
        const double beta_lo = 1e-4, beta_hi = 2e-2;
        for (int t = 1; t <= t_train; ++t) {
            double beta = beta_lo + (beta_hi - beta_lo) * (t - 1) / double(t_train - 1);
            s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
        }
    }

    s.validate();
    return s;
}

} // namespace lidarup
