#pragma once

// Market clearing: assembles frequency-secured ED and UC instances, runs the
// two-step pricing procedure (mixed-integer solve for the physical dispatch,
// then a convex re-solve with commitment relaxed and only the chosen nadir
// constraint for the duals), composes marginal prices from the duals, and
// settles revenues per generator type.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fresco/branch.hpp"
#include "fresco/conic.hpp"
#include "fresco/constraints.hpp"
#include "fresco/model.hpp"
#include "fresco/swing.hpp"

namespace fresco {

// Symbol ids of the priced quantities in the symbolic constraint copies.
inline constexpr int kSymInertia = 0;
inline constexpr int kSymLoss = 1;
inline constexpr int kSymFr0 = 2;  // service i lives at kSymFr0 + i

struct ClearingVariables {
    std::vector<double> power;       // per type (MW)
    std::vector<double> fr;          // per type (MW)
    std::vector<double> commitment;  // per type (units online)
    std::vector<double> service_fr;  // per service (MW)
    double loss_size = 0.0;          // P_L (MW)
    double curtailment = 0.0;        // MW
    double inertia = 0.0;            // H (MW*s)
};

struct DualBundle {
    double energy = 0.0;        // balance-row dual
    double lambda_rocof = 0.0;  // RoCoF row
    double lambda_qss = 0.0;    // q-s-s row
    // vector duals of the enforced nadir SOC in its standard form
    double mu = 0.0, lambda1 = 0.0, lambda2 = 0.0;
    int enforced_interval = -1;
    std::vector<std::pair<std::string, double>> bound_duals;
};

struct PriceReport {
    double energy = 0.0;         // GBP/MWh
    double inertia = 0.0;        // GBP/(MW*s)
    std::vector<double> fr;      // GBP/MW per service
    double loss = 0.0;           // GBP/MW, <= 0 (marginal value of a larger loss)
};

struct SettlementLine {
    std::string name;
    double energy_revenue = 0.0;
    double fr_revenue = 0.0;
    double inertia_revenue = 0.0;
    double reduced_loss_payment = 0.0;
    double operating_cost = 0.0;
    double profit = 0.0;
    double make_whole = 0.0;
};

struct ClearingOptions {
    bool uncapped_loss_payment = false;
    MisocpSettings misocp;
};

struct ClearingResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    ClearingVariables quantities;
    PriceReport prices;
    DualBundle duals;
    std::vector<SettlementLine> settlement;
    SecurityReport security;
    int chosen_interval = -1;
    double objective = std::numeric_limits<double>::quiet_NaN();
    double step2_objective = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;
};

/// A clearing instance: base conic program, nadir alternatives, and the
/// bookkeeping needed to read duals back out.
struct AssembledProgram {
    ConicProgram prog;
    std::vector<GuardedCone> alts;
    std::vector<IntVarSpec> int_vars;

    std::vector<int> p_col;  // per type
    std::vector<int> r_col;  // -1 for types without an FR service
    std::vector<int> y_col;  // -1 in ED mode
    int curt_col = -1;
    int pl_col = -1;  // -1 when the loss is fixed
    int h_col = -1;   // -1 when inertia is fixed
    double fixed_inertia = 0.0;
    double fixed_loss = 0.0;
    int balance_row = -1;
    int rocof_slack = -1;
    int qss_slack = -1;
    std::vector<int> type_service;  // service index per type, -1 if none

    // Symbolic copies (over kSym* ids) used for pricing.
    LinearConstraint sym_rocof, sym_qss;
    std::vector<NadirConstraint> sym_nadirs;

    LinExpr cost;  // original objective
};

namespace market_detail {

inline FreqQuantities symbol_quantities(int n_services) {
    FreqQuantities q;
    q.inertia = LinExpr::term(kSymInertia, 1.0);
    q.loss = LinExpr::term(kSymLoss, 1.0);
    for (int i = 0; i < n_services; ++i) q.fr.push_back(LinExpr::term(kSymFr0 + i, 1.0));
    return q;
}

inline void add_frequency_block(AssembledProgram& ap, const Scenario& sc) {
    // no credible loss means nothing to secure against
    if (ap.pl_col < 0 && ap.fixed_loss <= 0.0) return;
    FreqQuantities pq;  // program space
    pq.inertia = ap.h_col >= 0 ? LinExpr::term(ap.h_col, 1.0) : LinExpr(ap.fixed_inertia);
    pq.loss = ap.pl_col >= 0 ? LinExpr::term(ap.pl_col, 1.0) : LinExpr(ap.fixed_loss);
    pq.fr.assign(sc.services.size(), LinExpr{});
    for (std::size_t g = 0; g < sc.fleet.size(); ++g)
        if (ap.type_service[g] >= 0 && ap.r_col[g] >= 0)
            pq.fr[ap.type_service[g]] += LinExpr::term(ap.r_col[g], 1.0);

    FreqQuantities symq = symbol_quantities(static_cast<int>(sc.services.size()));

    ap.rocof_slack = add_linear(ap.prog, rocof_constraint(pq, sc.limits), "rocof");
    ap.sym_rocof = rocof_constraint(symq, sc.limits);
    if (!sc.services.empty()) {
        ap.qss_slack = add_linear(ap.prog, qss_constraint(pq), "qss");
        ap.sym_qss = qss_constraint(symq);
        auto prog_nadirs = nadir_constraints(sc.services, pq, sc.limits);
        ap.sym_nadirs = nadir_constraints(sc.services, symq, sc.limits);
        for (const auto& nc : prog_nadirs)
            ap.alts.push_back({nc.interval_id, nc.soc, nc.guard_lower, nc.guard_upper});
    } else if (ap.pl_col >= 0 || ap.fixed_loss > 0.0) {
        // no FR at all: q-s-s reduces to P_L <= 0
        FreqQuantities none = pq;
        ap.qss_slack = add_linear(ap.prog, qss_constraint(none), "qss");
        ap.sym_qss = qss_constraint(symq);
    }
}

}  // namespace market_detail

/// Frequency-secured single-period economic dispatch (fixed inertia, all
/// units available).
inline AssembledProgram assemble_ed(const Scenario& sc) {
    AssembledProgram ap;
    const int n = static_cast<int>(sc.fleet.size());
    ap.p_col.assign(n, -1);
    ap.r_col.assign(n, -1);
    ap.y_col.assign(n, -1);
    ap.type_service.assign(n, -1);

    ap.fixed_inertia = full_commitment_inertia(sc);
    if (!sc.services.empty() && ap.fixed_inertia <= 0.0)
        throw std::runtime_error("assemble_ed: insecure: no post-fault inertia");

    LinExpr balance;
    for (int g = 0; g < n; ++g) {
        const auto& gen = sc.fleet[g];
        ap.p_col[g] = ap.prog.add_var(ConeKind::Free, "p[" + gen.name + "]");
        double cap = gen.unit_count * gen.p_max;
        ap.prog.add_ineq_ge(LinExpr::term(ap.p_col[g], 1.0), gen.unit_count * gen.p_min,
                            "p_min[" + gen.name + "]");
        ap.prog.add_ineq_le(LinExpr::term(ap.p_col[g], 1.0), cap, "p_max[" + gen.name + "]");
        balance += LinExpr::term(ap.p_col[g], 1.0);
        ap.cost += LinExpr::term(ap.p_col[g], gen.marginal_cost);
        if (gen.fr_service) {
            ap.type_service[g] = sc.service_index(*gen.fr_service);
            ap.r_col[g] = ap.prog.add_var(ConeKind::NonNeg, "r[" + gen.name + "]");
            ap.prog.add_ineq_le(LinExpr::term(ap.r_col[g], 1.0), gen.fr_capacity,
                                "fr_cap[" + gen.name + "]");
            ap.prog.add_ineq_le(
                LinExpr::term(ap.r_col[g], 1.0) + LinExpr::term(ap.p_col[g], 1.0), cap,
                "headroom[" + gen.name + "]");
        }
    }
    ap.balance_row = ap.prog.add_eq(balance, sc.demand);

    int flag = sc.largest_infeed_index();
    if (sc.loss.track_largest_unit) {
        const auto& gen = sc.fleet[flag];
        ap.pl_col = ap.prog.add_var(ConeKind::Free, "p_loss");
        ap.prog.add_eq(LinExpr::term(ap.pl_col, double(gen.unit_count)) -
                           LinExpr::term(ap.p_col[flag], 1.0),
                       0.0);
        ap.prog.add_ineq_le(LinExpr::term(ap.pl_col, 1.0), sc.loss.p_loss_max, "p_loss_max");
    } else {
        ap.fixed_loss = sc.loss.p_loss_max;
    }

    market_detail::add_frequency_block(ap, sc);
    ap.prog.set_objective(ap.cost);
    return ap;
}

/// Frequency-secured single-period unit commitment with RES curtailment and
/// commitment-dependent inertia.
inline AssembledProgram assemble_uc(const Scenario& sc) {
    AssembledProgram ap;
    const int n = static_cast<int>(sc.fleet.size());
    ap.p_col.assign(n, -1);
    ap.r_col.assign(n, -1);
    ap.y_col.assign(n, -1);
    ap.type_service.assign(n, -1);

    LinExpr balance;
    LinExpr inertia_expr(-sc.loss.p_loss_max * sc.loss.inertia_const_loss);
    for (int g = 0; g < n; ++g) {
        const auto& gen = sc.fleet[g];
        ap.y_col[g] = ap.prog.add_var(ConeKind::Free, "y[" + gen.name + "]");
        ap.p_col[g] = ap.prog.add_var(ConeKind::Free, "p[" + gen.name + "]");
        ap.prog.add_ineq_ge(LinExpr::term(ap.y_col[g], 1.0), 0.0, "y_lb[" + gen.name + "]");
        ap.prog.add_ineq_le(LinExpr::term(ap.y_col[g], 1.0), double(gen.unit_count),
                            "y_ub[" + gen.name + "]");
        ap.prog.add_ineq_ge(
            LinExpr::term(ap.p_col[g], 1.0) - LinExpr::term(ap.y_col[g], gen.p_min), 0.0,
            "msg[" + gen.name + "]");
        ap.prog.add_ineq_le(
            LinExpr::term(ap.p_col[g], 1.0) - LinExpr::term(ap.y_col[g], gen.p_max), 0.0,
            "p_max[" + gen.name + "]");
        ap.prog.mark_integer(ap.y_col[g]);
        ap.int_vars.push_back({ap.y_col[g], 0.0, double(gen.unit_count), gen.p_max,
                               "y[" + gen.name + "]"});
        balance += LinExpr::term(ap.p_col[g], 1.0);
        inertia_expr += LinExpr::term(ap.y_col[g], gen.inertia_const * gen.p_max);
        ap.cost += LinExpr::term(ap.y_col[g], gen.no_load_cost) +
                   LinExpr::term(ap.p_col[g], gen.marginal_cost);
        if (gen.fr_service) {
            ap.type_service[g] = sc.service_index(*gen.fr_service);
            ap.r_col[g] = ap.prog.add_var(ConeKind::NonNeg, "r[" + gen.name + "]");
            ap.prog.add_ineq_le(LinExpr::term(ap.r_col[g], 1.0) -
                                    LinExpr::term(ap.y_col[g], gen.fr_capacity / gen.unit_count),
                                0.0, "fr_cap[" + gen.name + "]");
            ap.prog.add_ineq_le(LinExpr::term(ap.r_col[g], 1.0) +
                                    LinExpr::term(ap.p_col[g], 1.0) -
                                    LinExpr::term(ap.y_col[g], gen.p_max),
                                0.0, "headroom[" + gen.name + "]");
        }
    }
    ap.curt_col = ap.prog.add_var(ConeKind::NonNeg, "res_curtailed");
    ap.prog.add_ineq_le(LinExpr::term(ap.curt_col, 1.0), sc.res_available, "curt_max");
    balance -= LinExpr::term(ap.curt_col, 1.0);
    ap.balance_row = ap.prog.add_eq(balance, sc.demand - sc.res_available);

    ap.h_col = ap.prog.add_var(ConeKind::Free, "inertia");
    ap.prog.add_eq(LinExpr::term(ap.h_col, 1.0) - inertia_expr, 0.0);

    int flag = sc.largest_infeed_index();
    if (sc.loss.track_largest_unit) {
        const auto& gen = sc.fleet[flag];
        ap.pl_col = ap.prog.add_var(ConeKind::Free, "p_loss");
        ap.prog.add_eq(LinExpr::term(ap.pl_col, double(gen.unit_count)) -
                           LinExpr::term(ap.p_col[flag], 1.0),
                       0.0);
        ap.prog.add_ineq_le(LinExpr::term(ap.pl_col, 1.0), sc.loss.p_loss_max, "p_loss_max");
    } else {
        ap.fixed_loss = sc.loss.p_loss_max;
    }

    market_detail::add_frequency_block(ap, sc);
    ap.prog.set_objective(ap.cost);
    return ap;
}

inline AssembledProgram assemble(const Scenario& sc) {
    return sc.mode == Mode::Ed ? assemble_ed(sc) : assemble_uc(sc);
}

/// Marginal prices from the duals of the relaxed solve. Every price is
/// computed twice: generically as dual-weighted standard-form coefficients,
/// and through the closed formulas per service; both must agree.
inline PriceReport compose_prices(const DualBundle& duals,
                                  const std::optional<NadirConstraint>& enforced,
                                  std::span<const FrServiceSpec> services,
                                  const FrequencyLimits& lim) {
    const int ns = static_cast<int>(services.size());
    FreqQuantities symq = market_detail::symbol_quantities(ns);
    LinearConstraint rocof = rocof_constraint(symq, lim);
    LinearConstraint qss = qss_constraint(symq);

    // (a) generic: dual times coefficient, over RoCoF, q-s-s and the
    // enforced SOC in standard form.
    auto generic_price = [&](int sym) {
        double p = duals.lambda_rocof * rocof.lhs.coef(sym);
        if (ns > 0) p += duals.lambda_qss * qss.lhs.coef(sym);
        if (enforced) {
            StandardSocConstraint sf = to_standard_soc(enforced->soc);
            p += duals.mu * sf.rhs.coef(sym) - duals.lambda1 * sf.rows[0].coef(sym) -
                 duals.lambda2 * sf.rows[1].coef(sym);
        }
        return p;
    };

    // (b) closed form.
    const double sq = std::sqrt(lim.delta_f_max);
    const double inv4df = 1.0 / (4.0 * lim.delta_f_max);
    double h_closed = 2.0 * duals.lambda_rocof;
    double pl_closed = -duals.lambda_rocof * lim.f0 / lim.rocof_max;
    if (ns > 0) pl_closed -= duals.lambda_qss;
    std::vector<double> fr_closed(ns, 0.0);
    for (int i = 0; i < ns; ++i) fr_closed[i] = duals.lambda_qss;
    if (enforced) {
        h_closed += (duals.mu - duals.lambda1) / lim.f0;
        pl_closed -= duals.lambda2 / sq;
        for (int i : enforced->finished) {
            const auto& s = services[i];
            fr_closed[i] += duals.lambda2 / sq -
                            (duals.mu - duals.lambda1) * (s.delivery_time + 2.0 * s.delay) *
                                inv4df;
        }
        for (int i : enforced->active) {
            const auto& s = services[i];
            fr_closed[i] += (duals.mu + duals.lambda1) / s.delivery_time +
                            (duals.mu - duals.lambda1) * (s.delay * s.delay / s.delivery_time) *
                                inv4df -
                            duals.lambda2 * (s.delay / s.delivery_time) / sq;
        }
    }

    auto must_agree = [](double a, double b, const char* what) {
        if (std::fabs(a - b) > 1e-6 * std::max(1.0, std::fabs(a)))
            throw std::logic_error(std::string("compose_prices: generic and closed-form ") +
                                   what + " prices disagree");
        return a;
    };

    PriceReport rep;
    rep.energy = duals.energy;
    rep.inertia = must_agree(generic_price(kSymInertia), h_closed, "inertia");
    rep.loss = must_agree(generic_price(kSymLoss), pl_closed, "loss");
    rep.fr.resize(ns);
    for (int i = 0; i < ns; ++i)
        rep.fr[i] = must_agree(generic_price(kSymFr0 + i), fr_closed[i], "FR");
    return rep;
}

namespace market_detail {

// Canonical FR allocation among cost-equal optima: assign FR preferentially
// to higher-marginal-cost types by minimizing sum rank_g * R_g over the
// optimal face (rank 1 = most expensive energy).
inline std::vector<double> fr_merit_weights(const Scenario& sc) {
    std::vector<int> order(sc.fleet.size());
    for (std::size_t g = 0; g < order.size(); ++g) order[g] = static_cast<int>(g);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return sc.fleet[a].marginal_cost > sc.fleet[b].marginal_cost;
    });
    std::vector<double> w(sc.fleet.size(), 0.0);
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        w[order[pos]] = static_cast<double>(pos + 1);
    return w;
}

}  // namespace market_detail

/// Settlement lines for one cleared scenario. Inertia is remunerated only
/// when it is co-optimised (UC mode); in ED it is a fixed parameter and its
/// shadow price is diagnostic only.
inline std::vector<SettlementLine> settle(const Scenario& sc, const ClearingVariables& q,
                                          const PriceReport& prices,
                                          bool uncapped_loss_payment) {
    std::vector<SettlementLine> lines;
    int flag = sc.largest_infeed_index();
    double loss_value = std::max(0.0, -prices.loss);
    for (std::size_t g = 0; g < sc.fleet.size(); ++g) {
        const auto& gen = sc.fleet[g];
        SettlementLine ln;
        ln.name = gen.name;
        ln.energy_revenue = prices.energy * q.power[g];
        int svc = gen.fr_service ? sc.service_index(*gen.fr_service) : -1;
        ln.fr_revenue = svc >= 0 ? prices.fr[svc] * q.fr[g] : 0.0;
        ln.inertia_revenue =
            sc.mode == Mode::Uc
                ? prices.inertia * gen.inertia_const * gen.p_max * q.commitment[g]
                : 0.0;
        if (sc.loss.track_largest_unit && static_cast<int>(g) == flag) {
            double rate = uncapped_loss_payment
                              ? loss_value
                              : std::min(loss_value,
                                         std::max(0.0, prices.energy - gen.marginal_cost));
            double withheld = q.commitment[g] * gen.p_max - q.power[g];
            ln.reduced_loss_payment = rate * std::max(0.0, withheld);
        }
        ln.operating_cost = gen.no_load_cost * q.commitment[g] + gen.marginal_cost * q.power[g];
        ln.profit = ln.energy_revenue + ln.fr_revenue + ln.inertia_revenue +
                    ln.reduced_loss_payment - ln.operating_cost;
        ln.make_whole = std::max(0.0, -ln.profit);
        lines.push_back(std::move(ln));
    }
    return lines;
}

/// The two-step clearing: mixed-integer dispatch (with a deterministic FR
/// tie-break re-solve), then the dispatchable-model convex solve whose duals
/// price every frequency service. Dispatch comes from step 1, prices from
/// step 2.
inline ClearingResult clear_and_price(const Scenario& sc, const ClearingOptions& opt = {}) {
    ClearingResult res;
    AssembledProgram ap = assemble(sc);
    if (sc.mode == Mode::Ed && sc.res_available > 0.0)
        res.warnings.push_back("ED mode ignores res_available");

    // Step 1: mixed-integer solve for the physical dispatch.
    MisocpResult mi = solve_misocp(ap.prog, ap.alts, ap.int_vars, opt.misocp);
    if (mi.status != SolveStatus::Optimal) {
        res.status = mi.status;
        return res;
    }
    res.objective = mi.solution.objective_value;
    res.chosen_interval = mi.chosen_interval;

    // Step 1b: canonical FR allocation. With commitment and the nadir
    // interval pinned, the cost-optimal FR face is exactly flat, so a tiny
    // merit-ordered penalty on FR picks its deterministic representative
    // without moving the dispatch beyond solver tolerance.
    ConicSolution dispatch = mi.solution;
    bool any_fr = false;
    for (int c : ap.r_col) any_fr |= c >= 0;
    if (any_fr) {
        ConicProgram canon = ap.prog;
        if (res.chosen_interval >= 0) {
            const GuardedCone& gc = ap.alts[res.chosen_interval];
            add_rotated_soc(canon, gc.soc, "nadir");
            add_linear(canon, gc.guard_lower, "guard_lo");
            add_linear(canon, gc.guard_upper, "guard_hi");
        }
        for (std::size_t k = 0; k < ap.int_vars.size(); ++k)
            canon.add_eq(LinExpr::term(ap.int_vars[k].col, 1.0), mi.int_values[k]);
        auto weights = market_detail::fr_merit_weights(sc);
        double wr_scale = 1.0;
        for (std::size_t g = 0; g < sc.fleet.size(); ++g)
            if (ap.r_col[g] >= 0)
                wr_scale += weights[g] *
                            std::min(sc.fleet[g].fr_capacity,
                                     sc.fleet[g].unit_count * sc.fleet[g].p_max);
        double theta = 1e-6 * (1.0 + std::fabs(res.objective)) / wr_scale;
        LinExpr tie = ap.cost;
        for (std::size_t g = 0; g < sc.fleet.size(); ++g)
            if (ap.r_col[g] >= 0) tie += LinExpr::term(ap.r_col[g], theta * weights[g]);
        canon.set_objective(tie);
        canon.clear_integer_marks();
        ConicSolution cs = solve(canon, opt.misocp.solve);
        if (cs.status == SolveStatus::Optimal) {
            dispatch.x.head(ap.prog.num_vars()) = cs.x.head(ap.prog.num_vars());
        } else {
            res.warnings.push_back("FR tie-break re-solve failed; keeping step-1 dispatch");
        }
    }

    // Step 2: dispatchable model. Only the chosen nadir constraint, no
    // guards, commitment relaxed to continuous.
    ConicProgram relaxed = ap.prog;
    AppliedCone cone;
    if (res.chosen_interval >= 0)
        cone = add_rotated_soc(relaxed, ap.alts[res.chosen_interval].soc, "nadir");
    relaxed.clear_integer_marks();
    ConicSolution rs = solve(relaxed, opt.misocp.solve);
    if (rs.status != SolveStatus::Optimal) {
        // cannot happen when step 1 was feasible: the step-1 point is
        // feasible here as well
        res.status = SolveStatus::NumericalFailure;
        res.warnings.push_back("step-2 relaxed solve failed");
        return res;
    }
    res.step2_objective = rs.objective_value;

    // Duals.
    res.duals.energy = rs.y[ap.balance_row];
    res.duals.lambda_rocof = ap.rocof_slack >= 0 ? rs.z[ap.rocof_slack] : 0.0;
    res.duals.lambda_qss = ap.qss_slack >= 0 ? rs.z[ap.qss_slack] : 0.0;
    res.duals.enforced_interval = res.chosen_interval;
    if (res.chosen_interval >= 0) {
        double zu = rs.z[cone.block_start];
        double zv = rs.z[cone.block_start + 1];
        double zw = rs.z[cone.block_start + 2];
        res.duals.mu = 0.5 * (zu + zv);
        res.duals.lambda1 = 0.5 * (zv - zu);
        res.duals.lambda2 = -zw / std::sqrt(2.0);
    }
    for (int v = 0; v < ap.prog.num_vars(); ++v) {
        for (const auto& blk : ap.prog.blocks()) {
            if (blk.kind == ConeKind::NonNeg && blk.start == v && std::fabs(rs.z[v]) > 1e-10)
                res.duals.bound_duals.emplace_back(ap.prog.name(v), rs.z[v]);
        }
    }

    // Check the step-2 solution still sits in the chosen interval.
    if (res.chosen_interval >= 0) {
        const GuardedCone& gc = ap.alts[res.chosen_interval];
        auto val = [&](int col) { return rs.x[col]; };
        double lo = gc.guard_lower.lhs.eval(val);
        double hi = gc.guard_upper.lhs.eval(val);
        if (lo < -1e-6 || hi < -1e-6)
            res.warnings.push_back(
                "relaxed solution's equilibrium leaves the chosen nadir interval");
    }

    // Prices.
    std::optional<NadirConstraint> enforced;
    if (res.chosen_interval >= 0) enforced = ap.sym_nadirs[res.chosen_interval];
    res.prices = compose_prices(res.duals, enforced, sc.services, sc.limits);

    // Quantities from the step-1 dispatch.
    const int n = static_cast<int>(sc.fleet.size());
    auto& q = res.quantities;
    q.power.resize(n);
    q.fr.resize(n);
    q.commitment.resize(n);
    for (int g = 0; g < n; ++g) {
        q.power[g] = dispatch.x[ap.p_col[g]];
        q.fr[g] = ap.r_col[g] >= 0 ? dispatch.x[ap.r_col[g]] : 0.0;
        q.commitment[g] = sc.mode == Mode::Uc
                              ? std::round(dispatch.x[ap.y_col[g]])
                              : double(sc.fleet[g].unit_count);
    }
    q.curtailment = ap.curt_col >= 0 ? dispatch.x[ap.curt_col] : 0.0;
    q.loss_size = ap.pl_col >= 0 ? dispatch.x[ap.pl_col] : ap.fixed_loss;
    q.inertia = sc.mode == Mode::Uc ? system_inertia(q.commitment, sc) : ap.fixed_inertia;
    q.service_fr.assign(sc.services.size(), 0.0);
    for (int g = 0; g < n; ++g)
        if (ap.type_service[g] >= 0) q.service_fr[ap.type_service[g]] += q.fr[g];

    // Post-hoc physics screening of the dispatch.
    if (!sc.services.empty()) {
        SystemState state{q.inertia, q.loss_size, q.service_fr};
        FrTrajectory traj = make_trajectory(sc, q.service_fr);
        res.security = check_security(state, sc.limits, traj, 1e-6);
        if (!res.security.all_ok)
            res.warnings.push_back("dispatch failed the post-hoc security screen");
    }

    res.settlement = settle(sc, q, res.prices, opt.uncapped_loss_payment);
    res.status = SolveStatus::Optimal;
    return res;
}

/// Results export: one CSV with dispatch, prices and settlement sections.
inline void export_clearing_csv(std::ostream& os, const Scenario& sc,
                                const ClearingResult& res) {
    char buf[256];
    os << "section,dispatch\n";
    os << "type,commitment,power_mw,fr_mw\n";
    for (std::size_t g = 0; g < sc.fleet.size(); ++g) {
        std::snprintf(buf, sizeof(buf), "%s,%g,%.3f,%.3f\n", sc.fleet[g].name.c_str(),
                      res.quantities.commitment[g], res.quantities.power[g],
                      res.quantities.fr[g]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "res_curtailed,,%.3f,\n", res.quantities.curtailment);
    os << buf;
    std::snprintf(buf, sizeof(buf), "largest_loss,,%.3f,\n", res.quantities.loss_size);
    os << buf;
    std::snprintf(buf, sizeof(buf), "system_inertia_mws,,%.3f,\n", res.quantities.inertia);
    os << buf;

    os << "section,prices\n";
    os << "quantity,price\n";
    std::snprintf(buf, sizeof(buf), "energy_gbp_per_mwh,%.2f\n", res.prices.energy);
    os << buf;
    std::snprintf(buf, sizeof(buf), "inertia_gbp_per_mws,%.4f\n", res.prices.inertia);
    os << buf;
    for (std::size_t i = 0; i < sc.services.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "fr_%s_gbp_per_mw,%.2f\n", sc.services[i].name.c_str(),
                      res.prices.fr[i]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "reduced_loss_gbp_per_mw,%.2f\n",
                  std::max(0.0, -res.prices.loss));
    os << buf;

    os << "section,settlement\n";
    os << "type,energy_revenue,fr_revenue,inertia_revenue,reduced_loss_payment,"
          "operating_cost,profit,make_whole\n";
    for (const auto& ln : res.settlement) {
        std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f,%.2f,%.2f,%.2f,%.2f,%.2f\n",
                      ln.name.c_str(), ln.energy_revenue, ln.fr_revenue, ln.inertia_revenue,
                      ln.reduced_loss_payment, ln.operating_cost, ln.profit, ln.make_whole);
        os << buf;
    }
}

}  // namespace fresco
