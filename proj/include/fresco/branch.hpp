#pragma once

// Mixed-integer conic solving: best-first branch-and-bound over integer
// commitment counts plus a one-of-N disjunction over the conditional nadir
// constraints, and an exhaustive enumeration oracle used to verify it.
//
// Each nadir alternative is one rotated-SOC constraint plus the pair of
// linear guards that place the power equilibrium inside its FR(t) segment.
// The guards are enforced in closed form; boundary ties are resolved to the
// earlier interval, matching the swing module's tie rule.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "fresco/conic.hpp"
#include "fresco/constraints.hpp"

namespace fresco {

/// One nadir-interval alternative, with expressions over program columns.
struct GuardedCone {
    int interval_id = 0;
    RotatedSocConstraint soc;
    LinearConstraint guard_lower;
    LinearConstraint guard_upper;
};

struct AppliedCone {
    int block_start = -1;  // (u, v, w~) variables; w~ = sqrt(2) w
    int row_u = -1, row_v = -1, row_w = -1;
};

/// Lowers u*v >= w^2 into a rotated cone block (u, v, sqrt(2) w) tied to the
/// affine expressions by three equality rows.
inline AppliedCone add_rotated_soc(ConicProgram& p, const RotatedSocConstraint& soc,
                                   const std::string& prefix) {
    AppliedCone ap;
    ap.block_start = p.add_cone_block(ConeKind::RotatedSoc, 3, prefix);
    ap.row_u = p.add_eq(LinExpr::term(ap.block_start, 1.0) - soc.u, 0.0);
    ap.row_v = p.add_eq(LinExpr::term(ap.block_start + 1, 1.0) - soc.v, 0.0);
    ap.row_w = p.add_eq(LinExpr::term(ap.block_start + 2, 1.0) - std::sqrt(2.0) * soc.w, 0.0);
    return ap;
}

/// Lowers an inequality; returns the slack column (its cone dual is the
/// constraint multiplier). Equalities return -1.
inline int add_linear(ConicProgram& p, const LinearConstraint& c, const std::string& name) {
    switch (c.sense) {
        case Sense::Ge: return p.add_ineq_ge(c.lhs, c.rhs, name);
        case Sense::Le: return p.add_ineq_le(c.lhs, c.rhs, name);
        case Sense::Eq: p.add_eq(c.lhs, c.rhs); return -1;
    }
    return -1;
}

struct IntVarSpec {
    int col = -1;
    double lb = 0.0;
    double ub = 0.0;
    double weight = 0.0;  // branching tie-break, larger wins
    std::string name;
};

struct MisocpSettings {
    SolveSettings solve;
    double mip_gap = 1e-6;  // relative optimality gap
    double int_tol = 1e-6;
    std::uint64_t max_nodes = 200000;
    std::uint64_t max_enumeration = 1u << 20;
    std::ostream* node_log = nullptr;  // CSV: node id, bound, incumbent, decision
};

struct MisocpResult {
    SolveStatus status = SolveStatus::Infeasible;
    ConicSolution solution;
    int chosen_interval = -1;  // interval_id of the enforced alternative, -1 if none
    std::vector<double> int_values;
    std::uint64_t nodes_explored = 0;
    double best_bound = -std::numeric_limits<double>::infinity();
    int bound_monotonicity_violations = 0;
};

namespace branch_detail {

struct Node {
    double bound;
    int depth;
    std::vector<std::pair<double, double>> box;
    int alt;  // index into the alternatives list, -1 when there are none
    std::uint64_t id;
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound < b.bound;
        if (a.depth != b.depth) return a.depth < b.depth;
        if (a.box != b.box) return a.box < b.box;
        if (a.alt != b.alt) return a.alt < b.alt;
        return a.id < b.id;
    }
};

inline ConicProgram node_program(const ConicProgram& base,
                                 const std::vector<GuardedCone>& alts,
                                 const std::vector<IntVarSpec>& ints, const Node& nd,
                                 bool with_guards) {
    ConicProgram prog = base;
    if (nd.alt >= 0) {
        const GuardedCone& gc = alts[nd.alt];
        add_rotated_soc(prog, gc.soc, "nadir");
        if (with_guards) {
            add_linear(prog, gc.guard_lower, "guard_lo");
            add_linear(prog, gc.guard_upper, "guard_hi");
        }
    }
    for (std::size_t k = 0; k < ints.size(); ++k) {
        const auto& [lb, ub] = nd.box[k];
        if (lb == ub) {
            prog.add_eq(LinExpr::term(ints[k].col, 1.0), lb);
        } else {
            if (lb > ints[k].lb)
                prog.add_ineq_ge(LinExpr::term(ints[k].col, 1.0), lb, "node_lb");
            if (ub < ints[k].ub)
                prog.add_ineq_le(LinExpr::term(ints[k].col, 1.0), ub, "node_ub");
        }
    }
    return prog;
}

// Deterministic preference between equal-objective candidates: earlier nadir
// interval first, then lexicographically smaller integer assignment.
inline bool tie_better(int alt_a, const std::vector<double>& ints_a, int alt_b,
                       const std::vector<double>& ints_b) {
    if (alt_a != alt_b) return alt_a < alt_b;
    return ints_a < ints_b;
}

}  // namespace branch_detail

/// Global optimum over integer assignments and valid nadir intervals by
/// best-first branch-and-bound. Every alternative's guards are enforced in
/// its subtree, so any returned solution lies in its chosen interval.
inline MisocpResult solve_misocp(const ConicProgram& base, const std::vector<GuardedCone>& alts,
                                 const std::vector<IntVarSpec>& ints,
                                 const MisocpSettings& st = {}) {
    using branch_detail::Node;
    using branch_detail::node_program;

    MisocpResult res;
    std::set<Node, branch_detail::NodeOrder> open;
    std::uint64_t next_id = 0;
    bool any_numerical = false;

    std::vector<std::pair<double, double>> root_box;
    for (const auto& iv : ints) root_box.emplace_back(iv.lb, iv.ub);

    auto relax = [&](const Node& nd) { return solve(node_program(base, alts, ints, nd, true), st.solve); };

    auto push_root = [&](int alt) {
        Node nd{0.0, 0, root_box, alt, next_id++};
        ConicSolution sol = relax(nd);
        if (sol.status == SolveStatus::Infeasible) return;
        if (sol.status == SolveStatus::NumericalFailure) {
            any_numerical = true;
            return;
        }
        nd.bound = sol.status == SolveStatus::Unbounded
                       ? -std::numeric_limits<double>::infinity()
                       : sol.objective_value;
        open.insert(nd);
    };
    if (alts.empty()) push_root(-1);
    else
        for (std::size_t a = 0; a < alts.size(); ++a) push_root(static_cast<int>(a));

    double incumbent = std::numeric_limits<double>::infinity();
    bool have_incumbent = false;

    auto int_values_of = [&](const ConicSolution& sol) {
        std::vector<double> v;
        for (const auto& iv : ints) v.push_back(std::round(sol.x[iv.col]));
        return v;
    };

    while (!open.empty() && res.nodes_explored < st.max_nodes) {
        Node nd = *open.begin();
        open.erase(open.begin());
        ++res.nodes_explored;

        double prune_level = incumbent - st.mip_gap * std::max(1.0, std::fabs(incumbent));
        if (have_incumbent && nd.bound >= prune_level) {
            if (st.node_log)
                (*st.node_log) << nd.id << "," << nd.bound << "," << incumbent << ",pruned\n";
            continue;
        }

        // Re-solve: the stored bound came from the parent's relaxation.
        ConicSolution sol = relax(nd);
        if (sol.status == SolveStatus::Infeasible) {
            if (st.node_log)
                (*st.node_log) << nd.id << "," << nd.bound << "," << incumbent
                               << ",infeasible\n";
            continue;
        }
        if (sol.status == SolveStatus::NumericalFailure ||
            sol.status == SolveStatus::Unbounded) {
            // Unbounded nodes cannot occur with bounded commitment boxes.
            any_numerical = true;
            continue;
        }
        if (sol.objective_value < nd.bound - 1e-7 * std::max(1.0, std::fabs(nd.bound)))
            ++res.bound_monotonicity_violations;
        if (have_incumbent && sol.objective_value >= prune_level) {
            if (st.node_log)
                (*st.node_log) << nd.id << "," << sol.objective_value << "," << incumbent
                               << ",bound-pruned\n";
            continue;
        }

        // Most fractional integer variable; ties by weight, then column.
        int branch_var = -1;
        double best_frac = st.int_tol;
        for (std::size_t k = 0; k < ints.size(); ++k) {
            double v = sol.x[ints[k].col];
            double frac = std::fabs(v - std::round(v));
            bool better = frac > best_frac + 1e-12;
            if (!better && frac > best_frac - 1e-12 && branch_var >= 0) {
                better = ints[k].weight > ints[branch_var].weight ||
                         (ints[k].weight == ints[branch_var].weight &&
                          ints[k].col < ints[branch_var].col);
            }
            if (better) {
                best_frac = std::max(frac, best_frac);
                branch_var = static_cast<int>(k);
            }
        }

        if (branch_var < 0) {
            // Integer feasible.
            std::vector<double> vals = int_values_of(sol);
            bool better = sol.objective_value <
                          incumbent - 1e-9 * std::max(1.0, std::fabs(incumbent));
            if (!better && have_incumbent &&
                sol.objective_value <=
                    incumbent + 1e-9 * std::max(1.0, std::fabs(incumbent))) {
                better = branch_detail::tie_better(
                    nd.alt < 0 ? -1 : alts[nd.alt].interval_id, vals, res.chosen_interval,
                    res.int_values);
            }
            if (!have_incumbent || better) {
                incumbent = sol.objective_value;
                have_incumbent = true;
                res.solution = sol;
                res.chosen_interval = nd.alt < 0 ? -1 : alts[nd.alt].interval_id;
                res.int_values = vals;
            }
            if (st.node_log)
                (*st.node_log) << nd.id << "," << sol.objective_value << "," << incumbent
                               << ",integer\n";
            continue;
        }

        double v = sol.x[ints[branch_var].col];
        if (st.node_log)
            (*st.node_log) << nd.id << "," << sol.objective_value << ","
                           << (have_incumbent ? incumbent
                                              : std::numeric_limits<double>::quiet_NaN())
                           << ",branch " << ints[branch_var].name << "=" << v << "\n";
        Node down = nd, up = nd;
        down.box[branch_var].second = std::floor(v);
        up.box[branch_var].first = std::ceil(v);
        down.depth = up.depth = nd.depth + 1;
        down.bound = up.bound = sol.objective_value;
        down.id = next_id++;
        up.id = next_id++;
        if (down.box[branch_var].second >= down.box[branch_var].first) open.insert(down);
        if (up.box[branch_var].first <= up.box[branch_var].second) open.insert(up);
    }

    if (have_incumbent) {
        res.status = SolveStatus::Optimal;
        res.best_bound = incumbent;
    } else {
        res.status = any_numerical ? SolveStatus::NumericalFailure : SolveStatus::Infeasible;
    }
    return res;
}

/// Exhaustive verification oracle: solves one convex program per integer
/// assignment and nadir interval. `prescreen` may skip assignments that are
/// provably infeasible; it must never skip a feasible one.
inline MisocpResult enumerate_oracle(
    const ConicProgram& base, const std::vector<GuardedCone>& alts,
    const std::vector<IntVarSpec>& ints, const MisocpSettings& st = {},
    const std::function<bool(const std::vector<double>&)>& prescreen = nullptr) {
    MisocpResult res;
    std::uint64_t count = alts.empty() ? 1 : alts.size();
    for (const auto& iv : ints) {
        double span = iv.ub - iv.lb + 1.0;
        count *= static_cast<std::uint64_t>(span);
        if (count > st.max_enumeration)
            throw std::invalid_argument("enumerate_oracle: assignment space exceeds the guard");
    }

    std::vector<double> assign;
    for (const auto& iv : ints) assign.push_back(iv.lb);
    double incumbent = std::numeric_limits<double>::infinity();
    bool have = false;

    auto visit = [&](const std::vector<double>& a) {
        if (prescreen && !prescreen(a)) return;
        int nalts = alts.empty() ? 1 : static_cast<int>(alts.size());
        for (int alt = 0; alt < nalts; ++alt) {
            branch_detail::Node nd;
            nd.alt = alts.empty() ? -1 : alt;
            for (double v : a) nd.box.emplace_back(v, v);
            ConicProgram prog = branch_detail::node_program(base, alts, ints, nd, true);
            ConicSolution sol = solve(prog, st.solve);
            ++res.nodes_explored;
            if (sol.status != SolveStatus::Optimal) continue;
            bool better =
                sol.objective_value < incumbent - 1e-9 * std::max(1.0, std::fabs(incumbent));
            if (!better && have &&
                sol.objective_value <=
                    incumbent + 1e-9 * std::max(1.0, std::fabs(incumbent))) {
                better = branch_detail::tie_better(nd.alt < 0 ? -1 : alts[nd.alt].interval_id,
                                                   a, res.chosen_interval, res.int_values);
            }
            if (!have || better) {
                incumbent = sol.objective_value;
                have = true;
                res.solution = sol;
                res.chosen_interval = nd.alt < 0 ? -1 : alts[nd.alt].interval_id;
                res.int_values = a;
            }
        }
    };

    if (ints.empty()) {
        visit({});
    } else {
        while (true) {
            visit(assign);
            int k = static_cast<int>(ints.size()) - 1;
            while (k >= 0) {
                assign[k] += 1.0;
                if (assign[k] <= ints[k].ub + 1e-9) break;
                assign[k] = ints[k].lb;
                --k;
            }
            if (k < 0) break;
        }
    }

    res.status = have ? SolveStatus::Optimal : SolveStatus::Infeasible;
    res.best_bound = incumbent;
    return res;
}

}  // namespace fresco
