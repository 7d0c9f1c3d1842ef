#pragma once

// Synthesis of the frequency-security constraint family.
//
// For a loss P_L, inertia H and FR services i with magnitudes R_i, ramp
// durations T_i and activation delays T_del_i, the secured region is
//
//   RoCoF:  P_L * f0 / RoCoF_max <= 2 H
//   q-s-s:  sum_i R_i >= P_L
//   nadir:  one rotated second-order cone per FR(t) segment with positive
//           slope, enforced for the segment containing the power
//           equilibrium FR(t) = P_L.
//
// For the segment whose set of already-completed services is F and set of
// still-ramping services is A, solving the swing equation and substituting
// the equilibrium time yields the single template
//
//   ( H/f0 - sum_F R_i (T_i + 2 T_del_i) / (4 dfmax)
//          + sum_A R_i T_del_i^2 / (T_i 4 dfmax) ) * ( sum_A R_i / T_i )
//     >= ( P_L - sum_F R_i + sum_A R_i T_del_i / T_i )^2 / (4 dfmax)
//
// which specialises to every published instance of the constraint. The
// guard selecting the segment is FR(segment end) > P_L >= FR(segment start)
// with FR evaluated symbolically in the R_i.
//
// All expressions are affine in whatever variable space the caller passes
// in (program columns, or abstract quantity symbols for pricing).

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fresco/linexpr.hpp"
#include "fresco/model.hpp"

namespace fresco {

enum class Sense { Ge, Le, Eq };

struct LinearConstraint {
    LinExpr lhs;
    Sense sense = Sense::Ge;
    double rhs = 0.0;
};

/// u * v >= w^2 with u >= 0, v >= 0, all three affine.
struct RotatedSocConstraint {
    LinExpr u;  // inertia-side factor
    LinExpr v;  // aggregate ramp rate of the still-active services
    LinExpr w;  // residual loss over 2*sqrt(dfmax)
};

/// || rows ||_2 <= rhs.
struct StandardSocConstraint {
    LinExpr rows[2];
    LinExpr rhs;
};

struct NadirConstraint {
    int interval_id = 0;    // index among the positive-slope FR(t) segments
    double t_start = 0.0;   // segment bounds (s)
    double t_end = 0.0;
    std::vector<int> finished;  // services with T_del_i + T_i <= t_start
    std::vector<int> active;    // services ramping inside the segment
    RotatedSocConstraint soc;
    LinearConstraint guard_lower;  // P_L >= FR(t_start)
    LinearConstraint guard_upper;  // FR(t_end) >= P_L (strict in the limit)
};

/// Affine handles for the priced quantities of one clearing problem.
struct FreqQuantities {
    LinExpr inertia;           // H (MW*s)
    LinExpr loss;              // P_L (MW)
    std::vector<LinExpr> fr;   // R_i per service, aligned with the service list
};

/// P_L * f0 / RoCoF_max <= 2 H, stated as 2H - (f0/RoCoF_max) P_L >= 0.
inline LinearConstraint rocof_constraint(const FreqQuantities& q, const FrequencyLimits& lim) {
    LinearConstraint c;
    c.lhs = 2.0 * q.inertia - (lim.f0 / lim.rocof_max) * q.loss;
    c.sense = Sense::Ge;
    c.rhs = 0.0;
    return c;
}

/// sum_i R_i >= P_L.
inline LinearConstraint qss_constraint(const FreqQuantities& q) {
    LinearConstraint c;
    for (const auto& r : q.fr) c.lhs += r;
    c.lhs -= q.loss;
    c.sense = Sense::Ge;
    c.rhs = 0.0;
    return c;
}

/// FR(t) at time t, affine in the service magnitudes.
inline LinExpr symbolic_fr_at(std::span<const FrServiceSpec> services, const FreqQuantities& q,
                              double t) {
    LinExpr fr;
    for (std::size_t i = 0; i < services.size(); ++i) {
        const auto& s = services[i];
        if (t <= s.delay) continue;
        double frac = std::min(1.0, (t - s.delay) / s.delivery_time);
        fr += frac * q.fr[i];
    }
    return fr;
}

/// One conditional rotated-SOC nadir constraint per positive-slope FR(t)
/// segment, via the F/A template above.
inline std::vector<NadirConstraint> nadir_constraints(std::span<const FrServiceSpec> services,
                                                      const FreqQuantities& q,
                                                      const FrequencyLimits& lim) {
    if (services.empty())
        throw std::invalid_argument("nadir_constraints: empty service list");
    std::vector<double> bps{0.0};
    for (const auto& s : services) {
        bps.push_back(s.delay);
        bps.push_back(s.completion_time());
    }
    std::sort(bps.begin(), bps.end());
    bps.erase(std::unique(bps.begin(), bps.end()), bps.end());

    const double inv4df = 1.0 / (4.0 * lim.delta_f_max);
    const double inv2sq = 1.0 / (2.0 * std::sqrt(lim.delta_f_max));

    std::vector<NadirConstraint> out;
    for (std::size_t k = 0; k + 1 < bps.size(); ++k) {
        double t0 = bps[k], t1 = bps[k + 1];
        NadirConstraint nc;
        nc.t_start = t0;
        nc.t_end = t1;
        for (std::size_t i = 0; i < services.size(); ++i) {
            const auto& s = services[i];
            if (s.completion_time() <= t0) nc.finished.push_back(static_cast<int>(i));
            else if (s.delay <= t0 && t1 <= s.completion_time())
                nc.active.push_back(static_cast<int>(i));
        }
        if (nc.active.empty()) continue;  // flat segment, no equilibrium possible

        nc.interval_id = static_cast<int>(out.size());
        nc.soc.u = q.inertia / lim.f0;
        nc.soc.w = q.loss;
        for (int i : nc.finished) {
            const auto& s = services[i];
            nc.soc.u -= (s.delivery_time + 2.0 * s.delay) * inv4df * q.fr[i];
            nc.soc.w -= q.fr[i];
        }
        for (int i : nc.active) {
            const auto& s = services[i];
            nc.soc.u += (s.delay * s.delay / s.delivery_time) * inv4df * q.fr[i];
            nc.soc.v += q.fr[i] / s.delivery_time;
            nc.soc.w += (s.delay / s.delivery_time) * q.fr[i];
        }
        nc.soc.w *= inv2sq;

        nc.guard_lower.lhs = q.loss - symbolic_fr_at(services, q, t0);
        nc.guard_lower.sense = Sense::Ge;
        nc.guard_lower.rhs = 0.0;
        nc.guard_upper.lhs = symbolic_fr_at(services, q, t1) - q.loss;
        nc.guard_upper.sense = Sense::Ge;
        nc.guard_upper.rhs = 0.0;
        out.push_back(std::move(nc));
    }
    return out;
}

/// Standard SOC form ||[2w; u-v]|| <= u+v of a rotated SOC, ordered so that
/// the first row carries the inertia factor (u - v) and the second the
/// residual-loss factor (2w). Feasible iff the rotated form is.
inline StandardSocConstraint to_standard_soc(const RotatedSocConstraint& rsoc) {
    StandardSocConstraint s;
    s.rows[0] = rsoc.u - rsoc.v;
    s.rows[1] = 2.0 * rsoc.w;
    s.rhs = rsoc.u + rsoc.v;
    return s;
}

inline bool satisfies(const LinearConstraint& c, const std::function<double(int)>& value,
                      double tol = 0.0) {
    double lhs = c.lhs.eval(value);
    switch (c.sense) {
        case Sense::Ge: return lhs >= c.rhs - tol;
        case Sense::Le: return lhs <= c.rhs + tol;
        case Sense::Eq: return std::fabs(lhs - c.rhs) <= tol;
    }
    return false;
}

/// Signed margin of u*v - w^2 (>= 0 feasible), with the sign convention that
/// a negative u or v makes the constraint infeasible regardless of w.
inline double rsoc_margin(const RotatedSocConstraint& c, const std::function<double(int)>& value) {
    double u = c.u.eval(value), v = c.v.eval(value), w = c.w.eval(value);
    if (u < 0.0 || v < 0.0) return -std::fabs(u * v) - w * w;
    return u * v - w * w;
}

inline std::string to_string(const LinearConstraint& c,
                             const std::function<std::string(int)>& name) {
    const char* op = c.sense == Sense::Ge ? " >= " : c.sense == Sense::Le ? " <= " : " == ";
    std::ostringstream os;
    os << c.lhs.to_string(name) << op << c.rhs;
    return os.str();
}

inline std::string to_string(const NadirConstraint& c,
                             const std::function<std::string(int)>& name) {
    std::ostringstream os;
    os << "nadir[" << c.interval_id << "] t in (" << c.t_start << ", " << c.t_end << "]: ("
       << c.soc.u.to_string(name) << ") * (" << c.soc.v.to_string(name) << ") >= ("
       << c.soc.w.to_string(name) << ")^2"
       << "  if " << to_string(c.guard_upper, name) << " and "
       << to_string(c.guard_lower, name);
    return os.str();
}

/// Human-readable dump of the whole constraint family, one per line.
inline std::string dump_constraints(const LinearConstraint& rocof, const LinearConstraint& qss,
                                    std::span<const NadirConstraint> nadirs,
                                    const std::function<std::string(int)>& name) {
    std::ostringstream os;
    os << "rocof: " << to_string(rocof, name) << "\n";
    os << "qss: " << to_string(qss, name) << "\n";
    for (const auto& nc : nadirs) os << to_string(nc, name) << "\n";
    return os.str();
}

}  // namespace fresco
