#pragma once

// Closed-form post-fault frequency dynamics under the swing equation
//
//     (2H/f0) * d(df)/dt = FR(t) - P_L
//
// with FR(t) the aggregated piecewise-linear Frequency Response. Each
// service ramps linearly from 0 to R_i over (T_del_i, T_del_i + T_i] and
// stays at R_i afterwards. Load damping is not modelled.
//
// These functions are the physics oracle used to validate the conic
// nadir constraints, so they are kept strictly independent of the
// constraint-synthesis code.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "fresco/model.hpp"

namespace fresco {

struct FrRamp {
    double amount = 0.0;         // R_i (MW)
    double delivery_time = 1.0;  // T_i (s)
    double delay = 0.0;          // T_del_i (s)

    double completion() const { return delay + delivery_time; }
    double slope() const { return amount / delivery_time; }
};

struct FrTrajectory {
    std::vector<FrRamp> services;
    std::vector<double> breakpoints;  // sorted times where the FR(t) slope changes

    double total_fr() const {
        double r = 0.0;
        for (const auto& s : services) r += s.amount;
        return r;
    }
    double last_completion() const {
        double t = 0.0;
        for (const auto& s : services) t = std::max(t, s.completion());
        return t;
    }
};

inline FrTrajectory make_trajectory(std::span<const FrServiceSpec> services,
                                    std::span<const double> amounts) {
    FrTrajectory traj;
    for (std::size_t i = 0; i < services.size(); ++i) {
        double r = i < amounts.size() ? amounts[i] : 0.0;
        traj.services.push_back({r, services[i].delivery_time, services[i].delay});
    }
    traj.breakpoints.push_back(0.0);
    for (const auto& s : traj.services) {
        traj.breakpoints.push_back(s.delay);
        traj.breakpoints.push_back(s.completion());
    }
    std::sort(traj.breakpoints.begin(), traj.breakpoints.end());
    traj.breakpoints.erase(std::unique(traj.breakpoints.begin(), traj.breakpoints.end(),
                                       [](double a, double b) { return a == b; }),
                           traj.breakpoints.end());
    return traj;
}

inline FrTrajectory make_trajectory(const Scenario& sc, std::span<const double> amounts) {
    return make_trajectory(sc.services, amounts);
}

/// Aggregated FR delivered at time t (MW).
inline double fr_profile(const FrTrajectory& traj, double t) {
    double fr = 0.0;
    for (const auto& s : traj.services) {
        if (t <= s.delay) continue;
        fr += t >= s.completion() ? s.amount : s.slope() * (t - s.delay);
    }
    return fr;
}

/// Integral of FR over [0, t] (MW*s), exact for the piecewise-linear profile.
inline double fr_integral(const FrTrajectory& traj, double t) {
    double acc = 0.0;
    for (const auto& s : traj.services) {
        double u = t - s.delay;
        if (u <= 0.0) continue;
        if (u <= s.delivery_time) acc += 0.5 * s.amount * u * u / s.delivery_time;
        else acc += s.amount * (u - 0.5 * s.delivery_time);
    }
    return acc;
}

/// Frequency deviation below nominal at time t (Hz, positive = below f0):
///   (f0 / 2H) * (P_L * t - integral of FR).
inline double frequency_deviation(const SystemState& state, const FrequencyLimits& limits,
                                  const FrTrajectory& traj, double t) {
    return limits.f0 / (2.0 * state.inertia) * (state.loss_size * t - fr_integral(traj, t));
}

struct NadirResult {
    bool collapse = false;  // total FR below the loss, no power equilibrium
    double t_nadir = 0.0;
    double deviation = 0.0;  // Hz
};

/// Time and depth of the frequency nadir: the smallest t with FR(t) = P_L.
/// When FR(t) = P_L along a flat segment the segment's left endpoint is
/// reported, so the result is deterministic.
inline NadirResult nadir(const SystemState& state, const FrequencyLimits& limits,
                         const FrTrajectory& traj) {
    NadirResult res;
    double pl = state.loss_size;
    if (pl <= 0.0) {
        res.t_nadir = 0.0;
        res.deviation = 0.0;
        return res;
    }
    if (traj.total_fr() < pl) {
        res.collapse = true;
        res.t_nadir = std::numeric_limits<double>::quiet_NaN();
        res.deviation = std::numeric_limits<double>::quiet_NaN();
        return res;
    }
    const auto& bp = traj.breakpoints;
    double t_star = traj.last_completion();
    for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
        double t0 = bp[k], t1 = bp[k + 1];
        double f0v = fr_profile(traj, t0);
        double f1v = fr_profile(traj, t1);
        if (f0v >= pl) {
            t_star = t0;
            break;
        }
        if (f1v >= pl) {
            double slope = (f1v - f0v) / (t1 - t0);
            t_star = slope > 0.0 ? t0 + (pl - f0v) / slope : t1;
            break;
        }
    }
    res.t_nadir = t_star;
    res.deviation = frequency_deviation(state, limits, traj, t_star);
    return res;
}

struct SecurityReport {
    double rocof_at_0 = 0.0;  // Hz/s
    double t_nadir = 0.0;     // s (NaN on collapse)
    double nadir_dev = 0.0;   // Hz (NaN on collapse)
    bool qss_ok = false;
    bool all_ok = false;
};

/// Screens a post-fault state against all three frequency-security limits.
/// `tol` loosens the comparisons slightly so that solver outputs feasible to
/// numerical tolerance are not rejected.
inline SecurityReport check_security(const SystemState& state, const FrequencyLimits& limits,
                                     const FrTrajectory& traj, double tol = 1e-9) {
    SecurityReport rep;
    rep.rocof_at_0 = state.loss_size * limits.f0 / (2.0 * state.inertia);
    rep.qss_ok = traj.total_fr() >= state.loss_size - tol;
    if (!rep.qss_ok) {
        rep.t_nadir = std::numeric_limits<double>::quiet_NaN();
        rep.nadir_dev = std::numeric_limits<double>::quiet_NaN();
        rep.all_ok = false;
        return rep;
    }
    NadirResult n = nadir(state, limits, traj);
    if (n.collapse) {
        // total FR within tol of the loss: treat as the equality boundary
        rep.t_nadir = traj.last_completion();
        rep.nadir_dev = frequency_deviation(state, limits, traj, rep.t_nadir);
    } else {
        rep.t_nadir = n.t_nadir;
        rep.nadir_dev = n.deviation;
    }
    rep.all_ok = std::fabs(rep.rocof_at_0) <= limits.rocof_max + tol &&
                 std::fabs(rep.nadir_dev) <= limits.delta_f_max + tol && rep.qss_ok;
    return rep;
}

/// Writes the trajectory as CSV (t_s, freq_dev_hz, fr_mw) at fixed steps.
inline void write_trajectory_csv(std::ostream& os, const SystemState& state,
                                 const FrequencyLimits& limits, const FrTrajectory& traj,
                                 double step = 0.01, double t_end = -1.0) {
    if (t_end < 0.0) t_end = traj.last_completion() + 1.0;
    os << "t_s,freq_dev_hz,fr_mw\n";
    char line[128];
    long nsteps = static_cast<long>(std::ceil(t_end / step));
    for (long k = 0; k <= nsteps; ++k) {
        double t = std::min(k * step, t_end);
        double dev = frequency_deviation(state, limits, traj, t);
        double fr = fr_profile(traj, t);
        std::snprintf(line, sizeof(line), "%.6f,%.9f,%.6f\n", t, dev, fr);
        os << line;
    }
}

}  // namespace fresco
