#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "fresco/constraints.hpp"
#include "fresco/swing.hpp"
#include "test_util.hpp"

using namespace fresco;

namespace {

const FrequencyLimits kGbLimits{50.0, 1.0, 0.8};

// Symbol ids for the priced quantities.
constexpr int kH = 0;
constexpr int kPl = 1;
constexpr int kR0 = 2;

FreqQuantities symbols(int n_services) {
    FreqQuantities q;
    q.inertia = LinExpr::term(kH, 1.0);
    q.loss = LinExpr::term(kPl, 1.0);
    for (int i = 0; i < n_services; ++i) q.fr.push_back(LinExpr::term(kR0 + i, 1.0));
    return q;
}

std::function<double(int)> point(double h, double pl, std::vector<double> r) {
    return [=](int id) {
        if (id == kH) return h;
        if (id == kPl) return pl;
        return r[id - kR0];
    };
}

}  // namespace

TEST_CASE("rocof constraint is P_L f0 / RoCoF_max <= 2H") {
    auto q = symbols(1);
    LinearConstraint c = rocof_constraint(q, kGbLimits);
    CHECK(c.lhs.coef(kH) == 2.0);
    CHECK(c.lhs.coef(kPl) == Catch::Approx(-50.0));
    CHECK(c.rhs == 0.0);
    // fixed P_L = 100: 2H >= 5000
    CHECK(satisfies(c, point(2500.0, 100.0, {0})));
    CHECK(!satisfies(c, point(2499.0, 100.0, {0})));
    // large RoCoF limit makes the constraint vacuous
    FrequencyLimits loose = kGbLimits;
    loose.rocof_max = 1e9;
    LinearConstraint cl = rocof_constraint(q, loose);
    CHECK(std::fabs(cl.lhs.coef(kPl)) < 1e-6);
    // the 1800 MW system satisfies it with slack at H = 82500
    CHECK(satisfies(c, point(82500.0, 1800.0, {0})));
}

TEST_CASE("qss constraint sums every service against the loss") {
    auto q2 = symbols(2);
    LinearConstraint c = qss_constraint(q2);
    CHECK(c.lhs.coef(kR0) == 1.0);
    CHECK(c.lhs.coef(kR0 + 1) == 1.0);
    CHECK(c.lhs.coef(kPl) == -1.0);
    CHECK(satisfies(c, point(0, 100.0, {197.0238, 175.0})));
    CHECK(satisfies(c, point(0, 372.0, {197.0, 175.0})));  // equality boundary
    CHECK(!satisfies(c, point(0, 373.0, {197.0, 175.0})));

    auto q0 = symbols(0);
    LinearConstraint c0 = qss_constraint(q0);
    CHECK(!satisfies(c0, point(0, 10.0, {})));  // no services, any positive loss fails
}

TEST_CASE("nadir template reproduces the three-service constraints") {
    std::vector<FrServiceSpec> svc{{"fr1", 7, 0}, {"fr2", 10, 0}, {"fr3", 20, 0}};
    auto q = symbols(3);
    auto ncs = nadir_constraints(svc, q, kGbLimits);
    REQUIRE(ncs.size() == 3);
    const double inv4df = 1.0 / 3.2;
    const double inv2sq = 1.0 / (2.0 * std::sqrt(0.8));

    // interval 1: (H/f0)(R1/T1 + R2/T2 + R3/T3) >= P_L^2 / (4 dfmax)
    CHECK(ncs[0].finished.empty());
    CHECK(ncs[0].active == std::vector<int>{0, 1, 2});
    CHECK(ncs[0].soc.u.coef(kH) == Catch::Approx(1.0 / 50.0));
    CHECK(ncs[0].soc.u.coef(kR0) == 0.0);
    CHECK(ncs[0].soc.v.coef(kR0) == Catch::Approx(1.0 / 7));
    CHECK(ncs[0].soc.v.coef(kR0 + 1) == Catch::Approx(1.0 / 10));
    CHECK(ncs[0].soc.v.coef(kR0 + 2) == Catch::Approx(1.0 / 20));
    CHECK(ncs[0].soc.w.coef(kPl) == Catch::Approx(inv2sq));
    CHECK(ncs[0].soc.w.coef(kR0) == 0.0);
    // guard: R1 + R2 T1/T2 + R3 T1/T3 > P_L
    CHECK(ncs[0].guard_upper.lhs.coef(kR0) == Catch::Approx(1.0));
    CHECK(ncs[0].guard_upper.lhs.coef(kR0 + 1) == Catch::Approx(0.7));
    CHECK(ncs[0].guard_upper.lhs.coef(kR0 + 2) == Catch::Approx(7.0 / 20));
    CHECK(ncs[0].guard_upper.lhs.coef(kPl) == Catch::Approx(-1.0));

    // interval 2: (H/f0 - R1 T1/(4 dfmax))(R2/T2 + R3/T3) >= (P_L - R1)^2/(4 dfmax)
    CHECK(ncs[1].finished == std::vector<int>{0});
    CHECK(ncs[1].active == std::vector<int>{1, 2});
    CHECK(ncs[1].soc.u.coef(kR0) == Catch::Approx(-7.0 * inv4df));
    CHECK(ncs[1].soc.v.coef(kR0) == 0.0);
    CHECK(ncs[1].soc.w.coef(kR0) == Catch::Approx(-inv2sq));

    // interval 3: (H/f0 - (R1 T1 + R2 T2)/(4 dfmax)) R3/T3 >= (P_L - R1 - R2)^2/(4 dfmax)
    CHECK(ncs[2].finished == std::vector<int>{0, 1});
    CHECK(ncs[2].soc.u.coef(kR0) == Catch::Approx(-7.0 * inv4df));
    CHECK(ncs[2].soc.u.coef(kR0 + 1) == Catch::Approx(-10.0 * inv4df));
    CHECK(ncs[2].soc.v.coef(kR0 + 2) == Catch::Approx(1.0 / 20));
    CHECK(ncs[2].soc.w.coef(kR0 + 1) == Catch::Approx(-inv2sq));
}

TEST_CASE("nadir template reproduces the delayed two-service constraints") {
    // Delays chosen so the second service starts after the first completes,
    // leaving a flat segment in between (which must produce no constraint).
    std::vector<FrServiceSpec> svc{{"fast", 7, 0.4}, {"slow", 10, 8.0}};
    auto q = symbols(2);
    auto ncs = nadir_constraints(svc, q, kGbLimits);
    REQUIRE(ncs.size() == 2);
    const double inv4df = 1.0 / 3.2;
    const double inv2sq = 1.0 / (2.0 * std::sqrt(0.8));

    // inside service 1's ramp:
    // (H/f0 + R1 Tdel1^2/T1 /(4 dfmax)) (R1/T1) >= (P_L + R1 Tdel1/T1)^2/(4 dfmax)
    CHECK(ncs[0].active == std::vector<int>{0});
    CHECK(ncs[0].finished.empty());
    CHECK(ncs[0].soc.u.coef(kR0) == Catch::Approx(0.4 * 0.4 / 7.0 * inv4df));
    CHECK(ncs[0].soc.v.coef(kR0) == Catch::Approx(1.0 / 7));
    CHECK(ncs[0].soc.w.coef(kR0) == Catch::Approx(0.4 / 7.0 * inv2sq));
    CHECK(ncs[0].soc.w.coef(kPl) == Catch::Approx(inv2sq));
    // guard: R1 > P_L
    CHECK(ncs[0].guard_upper.lhs.coef(kR0) == Catch::Approx(1.0));
    CHECK(ncs[0].guard_upper.lhs.coef(kPl) == Catch::Approx(-1.0));

    // service 1 finished, service 2 ramping:
    // (H/f0 - R1(T1 + 2 Tdel1)/(4 dfmax) + R2 Tdel2^2/T2/(4 dfmax)) (R2/T2)
    //   >= (P_L - R1 + R2 Tdel2/T2)^2 / (4 dfmax)
    CHECK(ncs[1].finished == std::vector<int>{0});
    CHECK(ncs[1].active == std::vector<int>{1});
    CHECK(ncs[1].soc.u.coef(kR0) == Catch::Approx(-(7.0 + 0.8) * inv4df));
    CHECK(ncs[1].soc.u.coef(kR0 + 1) == Catch::Approx(64.0 / 10.0 * inv4df));
    CHECK(ncs[1].soc.v.coef(kR0 + 1) == Catch::Approx(1.0 / 10));
    CHECK(ncs[1].soc.w.coef(kR0) == Catch::Approx(-inv2sq));
    CHECK(ncs[1].soc.w.coef(kR0 + 1) == Catch::Approx(8.0 / 10.0 * inv2sq));
}

TEST_CASE("nadir_constraints rejects an empty service list") {
    auto q = symbols(0);
    CHECK_THROWS_AS(nadir_constraints(std::vector<FrServiceSpec>{}, q, kGbLimits),
                    std::invalid_argument);
}

TEST_CASE("to_standard_soc matches the published matrix structure") {
    // u = H/f0, v = R1/T1, w = P_L/(2 sqrt(dfmax))
    auto q = symbols(1);
    RotatedSocConstraint rsoc;
    rsoc.u = q.inertia / 50.0;
    rsoc.v = q.fr[0] / 10.0;
    rsoc.w = q.loss * (1.0 / (2.0 * std::sqrt(0.8)));
    StandardSocConstraint std_form = to_standard_soc(rsoc);
    // first row carries the 1/f0 inertia coefficient
    CHECK(std_form.rows[0].coef(kH) == Catch::Approx(1.0 / 50));
    CHECK(std_form.rows[0].coef(kR0) == Catch::Approx(-1.0 / 10));
    // second row carries the 1/sqrt(dfmax) loss coefficient
    CHECK(std_form.rows[1].coef(kPl) == Catch::Approx(1.0 / std::sqrt(0.8)));
    CHECK(std_form.rhs.coef(kH) == Catch::Approx(1.0 / 50));
    CHECK(std_form.rhs.coef(kR0) == Catch::Approx(1.0 / 10));
}

TEST_CASE("standard SOC form is feasible iff the rotated form is") {
    testutil::Rng rng(99);
    for (int inst = 0; inst < 20; ++inst) {
        RotatedSocConstraint rsoc;
        auto random_expr = [&] {
            LinExpr e(rng.uniform(-1, 1));
            for (int v = 0; v < 3; ++v) e += LinExpr::term(v, rng.uniform(-2, 2));
            return e;
        };
        rsoc.u = random_expr();
        rsoc.v = random_expr();
        rsoc.w = random_expr();
        StandardSocConstraint sf = to_standard_soc(rsoc);
        int checked = 0;
        for (int k = 0; k < 500; ++k) {
            std::vector<double> xv{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
            auto val = [&](int id) { return xv[id]; };
            double u = rsoc.u.eval(val), v = rsoc.v.eval(val), w = rsoc.w.eval(val);
            bool in_rotated = u >= 0 && v >= 0 && u * v >= w * w;
            double r0 = sf.rows[0].eval(val), r1 = sf.rows[1].eval(val);
            double rhs = sf.rhs.eval(val);
            bool in_standard = std::sqrt(r0 * r0 + r1 * r1) <= rhs;
            // skip points numerically on the boundary
            double margin = std::fabs(u * v - w * w) + std::fabs(u) + std::fabs(v);
            if (std::fabs(u * v - w * w) < 1e-9 * std::max(1.0, margin)) continue;
            CHECK(in_rotated == in_standard);
            ++checked;
        }
        CHECK(checked > 400);
    }

    // degenerate w = 0 reduces to u >= 0 and v >= 0
    RotatedSocConstraint deg;
    deg.u = LinExpr::term(0, 1.0);
    deg.v = LinExpr::term(1, 1.0);
    deg.w = LinExpr(0.0);
    StandardSocConstraint sf = to_standard_soc(deg);
    auto val_pos = [](int id) { return id == 0 ? 2.0 : 3.0; };
    auto val_neg = [](int id) { return id == 0 ? -1.0 : 3.0; };
    auto norm = [&](const std::function<double(int)>& v) {
        double r0 = sf.rows[0].eval(v), r1 = sf.rows[1].eval(v);
        return std::sqrt(r0 * r0 + r1 * r1) <= sf.rhs.eval(v);
    };
    CHECK(norm(val_pos));
    CHECK(!norm(val_neg));
}

namespace {

struct RandomInstance {
    std::vector<FrServiceSpec> services;
    std::vector<double> amounts;
    double inertia;
    double loss;
};

RandomInstance random_secured_instance(testutil::Rng& rng) {
    RandomInstance ri;
    int k = rng.uniform_int(1, 4);
    std::vector<std::pair<FrServiceSpec, double>> gen;
    for (int i = 0; i < k; ++i) {
        FrServiceSpec s;
        s.name = "s" + std::to_string(i);
        s.delivery_time = rng.uniform(1.0, 25.0);
        s.delay = rng.chance(0.5) ? rng.uniform(0.01, 4.0) : 0.0;
        gen.emplace_back(s, rng.uniform(20.0, 400.0));
    }
    std::sort(gen.begin(), gen.end(), [](const auto& a, const auto& b) {
        if (a.first.delay != b.first.delay) return a.first.delay < b.first.delay;
        return a.first.completion_time() < b.first.completion_time();
    });
    double total = 0.0;
    for (auto& [s, r] : gen) {
        ri.services.push_back(s);
        ri.amounts.push_back(r);
        total += r;
    }
    ri.loss = rng.uniform(0.05, 0.999) * total;
    ri.inertia = rng.uniform(1000.0, 60000.0);
    return ri;
}

}  // namespace

TEST_CASE("selected nadir SOC agrees with the swing oracle") {
    testutil::Rng rng(20240811);
    int binding_checked = 0;
    for (int inst = 0; inst < 1000; ++inst) {
        RandomInstance ri = random_secured_instance(rng);
        int k = static_cast<int>(ri.services.size());
        auto q = symbols(k);
        auto ncs = nadir_constraints(ri.services, q, kGbLimits);
        auto val = point(ri.inertia, ri.loss, ri.amounts);

        // exactly one guard holds, up to boundary ties
        std::vector<int> holding;
        for (std::size_t j = 0; j < ncs.size(); ++j) {
            double up = ncs[j].guard_upper.lhs.eval(val);
            double lo = ncs[j].guard_lower.lhs.eval(val);
            if (up >= 0.0 && lo >= 0.0) holding.push_back(static_cast<int>(j));
        }
        REQUIRE(!holding.empty());
        if (holding.size() > 1) {
            // ties only at segment boundaries: FR(t_boundary) == P_L
            for (std::size_t t = 1; t < holding.size(); ++t) {
                double up = ncs[holding[t - 1]].guard_upper.lhs.eval(val);
                CHECK(std::fabs(up) <= 1e-7 * std::max(1.0, ri.loss));
            }
        }
        const NadirConstraint& sel = ncs[holding.front()];

        SystemState st{ri.inertia, ri.loss, ri.amounts};
        FrTrajectory traj = make_trajectory(ri.services, ri.amounts);
        NadirResult nd = nadir(st, kGbLimits, traj);
        REQUIRE(!nd.collapse);

        double soc_margin = rsoc_margin(sel.soc, val);
        double dev_margin = kGbLimits.delta_f_max - nd.deviation;
        double scale = std::max({1.0, std::fabs(sel.soc.u.eval(val) * sel.soc.v.eval(val))});
        if (std::fabs(soc_margin) > 1e-7 * scale && std::fabs(dev_margin) > 1e-7) {
            CHECK((soc_margin > 0) == (dev_margin > 0));
        }

        // binding version: rescale H so the selected SOC holds with equality
        double v_val = sel.soc.v.eval(val);
        double w_val = sel.soc.w.eval(val);
        double u_rest = sel.soc.u.eval(val) - ri.inertia / kGbLimits.f0;
        if (v_val > 1e-9) {
            double h_star = kGbLimits.f0 * (w_val * w_val / v_val - u_rest);
            if (h_star > 1.0) {
                SystemState st2{h_star, ri.loss, ri.amounts};
                NadirResult nd2 = nadir(st2, kGbLimits, traj);
                REQUIRE(!nd2.collapse);
                CHECK(nd2.deviation == Catch::Approx(0.8).margin(1e-6));
                ++binding_checked;
            }
        }
    }
    CHECK(binding_checked > 500);
}

TEST_CASE("constraint dump is one line per constraint") {
    std::vector<FrServiceSpec> svc{{"fast", 7, 0}, {"slow", 10, 0}};
    auto q = symbols(2);
    auto names = [](int id) {
        if (id == kH) return std::string("H");
        if (id == kPl) return std::string("P_L");
        return "R_" + std::to_string(id - kR0 + 1);
    };
    auto ncs = nadir_constraints(svc, q, kGbLimits);
    std::string dump =
        dump_constraints(rocof_constraint(q, kGbLimits), qss_constraint(q), ncs, names);
    CHECK(std::count(dump.begin(), dump.end(), '\n') == 2 + static_cast<long>(ncs.size()));
    CHECK(dump.find("rocof: 2*H - 50*P_L >= 0") != std::string::npos);
    CHECK(dump.find("qss: -P_L + R_1 + R_2 >= 0") != std::string::npos);
    CHECK(dump.find("nadir[0]") != std::string::npos);
}
