#include <catch2/catch_amalgamated.hpp>

#include "fresco/model.hpp"
#include "test_util.hpp"

using namespace fresco;

namespace {

// The three-type thermal fleet used across the ED reference cases: a
// must-run 100 MW unit plus 5x80 MW and 5x60 MW types, single 10 s FR
// service, bids 15/17/18, H = 6 s everywhere.
std::string single_service_fleet_json() {
    return R"({
      "limits": {"f0": 50, "rocof_max": 1, "delta_f_max": 0.8},
      "services": [{"name": "PFR", "delivery_time": 10, "delay": 0}],
      "fleet": [
        {"name": "nuclear", "unit_count": 1, "p_min": 100, "p_max": 100,
         "fr_capacity": 0, "fr_service": null, "inertia_const": 6,
         "marginal_cost": 15, "no_load_cost": 0, "is_largest_infeed": true},
        {"name": "type1", "unit_count": 5, "p_min": 0, "p_max": 80,
         "fr_capacity": 225, "fr_service": "PFR", "inertia_const": 6,
         "marginal_cost": 17, "no_load_cost": 0},
        {"name": "type2", "unit_count": 5, "p_min": 0, "p_max": 60,
         "fr_capacity": 175, "fr_service": "PFR", "inertia_const": 6,
         "marginal_cost": 18, "no_load_cost": 0}
      ],
      "demand": 250,
      "res_available": 0,
      "loss": {"p_loss_max": 100, "inertia_const_loss": 6},
      "mode": "ED"
    })";
}

}  // namespace

TEST_CASE("parse_scenario accepts the single-service reference fleet") {
    Scenario sc = parse_scenario(single_service_fleet_json());
    REQUIRE(sc.fleet.size() == 3);
    CHECK(sc.fleet[0].name == "nuclear");
    CHECK(sc.fleet[1].unit_count == 5);
    CHECK(sc.fleet[1].p_max == 80.0);
    CHECK(sc.fleet[2].marginal_cost == 18.0);
    CHECK(sc.services.size() == 1);
    CHECK(sc.services[0].delivery_time == 10.0);
    CHECK(sc.mode == Mode::Ed);
    CHECK(sc.largest_infeed_index() == 0);
}

TEST_CASE("parse_scenario rejects bad inputs with field paths") {
    SECTION("zero delivery time") {
        std::string text = single_service_fleet_json();
        const std::string from = "\"delivery_time\": 10";
        auto pos = text.find(from);
        REQUIRE(pos != std::string::npos);
        text.replace(pos, from.size(), "\"delivery_time\": 0");
        try {
            parse_scenario(text);
            FAIL("expected ScenarioError");
        } catch (const ScenarioError& e) {
            CHECK(std::string(e.what()).find("delivery_time must be positive") !=
                  std::string::npos);
            CHECK(e.path() == "services[0].delivery_time");
        }
    }
    SECTION("duplicate service names") {
        std::string text = single_service_fleet_json();
        const std::string from = "[{\"name\": \"PFR\", \"delivery_time\": 10, \"delay\": 0}]";
        auto pos = text.find(from);
        REQUIRE(pos != std::string::npos);
        text.replace(pos, from.size(),
                     "[{\"name\": \"PFR\", \"delivery_time\": 10, \"delay\": 0},"
                     " {\"name\": \"PFR\", \"delivery_time\": 7, \"delay\": 0}]");
        REQUIRE_THROWS_AS(parse_scenario(text), ScenarioError);
        REQUIRE_THROWS_WITH(parse_scenario(text),
                            Catch::Matchers::ContainsSubstring("duplicate service name"));
    }
    SECTION("missing field") {
        std::string text = single_service_fleet_json();
        auto pos = text.find("\"demand\": 250,");
        text.erase(pos, 14);
        REQUIRE_THROWS_WITH(parse_scenario(text),
                            Catch::Matchers::ContainsSubstring("demand: missing field"));
    }
    SECTION("loss tracking without a flagged type") {
        std::string text = single_service_fleet_json();
        auto pos = text.find("\"is_largest_infeed\": true");
        text.replace(pos, 25, "\"is_largest_infeed\": false");
        pos = text.find("\"inertia_const_loss\": 6");
        text.replace(pos, 23, "\"inertia_const_loss\": 6, \"track_largest_unit\": true");
        try {
            parse_scenario(text);
            FAIL("expected ScenarioError");
        } catch (const ScenarioError& e) {
            CHECK(e.path() == "loss.track_largest_unit");
        }
    }
    SECTION("identical service dynamics") {
        std::string text = single_service_fleet_json();
        const std::string from = "[{\"name\": \"PFR\", \"delivery_time\": 10, \"delay\": 0}]";
        auto pos = text.find(from);
        REQUIRE(pos != std::string::npos);
        text.replace(pos, from.size(),
                     "[{\"name\": \"A\", \"delivery_time\": 10, \"delay\": 0},"
                     " {\"name\": \"B\", \"delivery_time\": 10, \"delay\": 0}]");
        REQUIRE_THROWS_WITH(parse_scenario(text),
                            Catch::Matchers::ContainsSubstring("identical dynamics"));
    }
}

TEST_CASE("system_inertia matches the reference systems") {
    Scenario sc = parse_scenario(single_service_fleet_json());
    std::vector<double> full{1, 5, 5};
    // 6*(100 + 400 + 300) - 100*6
    CHECK(system_inertia(full, sc) == Catch::Approx(4200.0).margin(1e-12));
    CHECK(full_commitment_inertia(sc) == Catch::Approx(4200.0).margin(1e-12));

    // The 61-unit UC fleet with 1 + 24 + 30 units online.
    Scenario uc;
    uc.fleet = {GeneratorType{"nuclear", 1, 1800, 1800, 0, {}, 5, 10, 0, true},
                GeneratorType{"type1", 30, 250, 500, 15000, {}, 5, 95, 500, false},
                GeneratorType{"type2", 30, 75, 150, 4500, {}, 5, 50, 500, false}};
    uc.loss = {1800.0, 5.0, false};
    std::vector<double> online{1, 24, 30};
    CHECK(system_inertia(online, uc) == Catch::Approx(82500.0).margin(1e-9));

    Scenario empty;
    empty.loss = {100.0, 0.0, false};
    std::vector<double> none;
    CHECK(system_inertia(none, empty) == 0.0);
}

TEST_CASE("system_inertia is linear in the commitment") {
    Scenario sc = parse_scenario(single_service_fleet_json());
    sc.loss.inertia_const_loss = 0.0;
    testutil::Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> y(3), y2(3);
        for (int g = 0; g < 3; ++g) {
            y[g] = rng.uniform(0.0, sc.fleet[g].unit_count);
            y2[g] = 2.0 * y[g];
        }
        double h1 = system_inertia(y, sc);
        CHECK(system_inertia(y2, sc) == Catch::Approx(2.0 * h1).margin(1e-9));
    }
}

TEST_CASE("scenario serialization round-trips") {
    testutil::Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        Scenario sc;
        sc.limits = {rng.uniform(40, 60), rng.uniform(0.5, 2.0), rng.uniform(0.3, 1.5)};
        int ns = rng.uniform_int(1, 3);
        for (int i = 0; i < ns; ++i) {
            FrServiceSpec s;
            s.name = "svc" + std::to_string(i);
            s.delivery_time = rng.uniform(1.0, 30.0);
            s.delay = i + rng.uniform(0.0, 0.9);  // strictly increasing delays
            sc.services.push_back(s);
        }
        int ng = rng.uniform_int(1, 4);
        for (int g = 0; g < ng; ++g) {
            GeneratorType gt;
            gt.name = "gen" + std::to_string(g);
            gt.unit_count = rng.uniform_int(1, 10);
            gt.p_min = rng.uniform(0.0, 50.0);
            gt.p_max = gt.p_min + rng.uniform(1.0, 500.0);
            gt.fr_capacity = rng.uniform(0.0, 300.0);
            if (rng.chance(0.7)) gt.fr_service = sc.services[rng.uniform_int(0, ns - 1)].name;
            gt.inertia_const = rng.uniform(0.0, 9.0);
            gt.marginal_cost = rng.uniform(1.0, 100.0);
            gt.no_load_cost = rng.uniform(0.0, 600.0);
            gt.is_largest_infeed = g == 0;
            sc.fleet.push_back(gt);
        }
        sc.demand = rng.uniform(0.0, 1000.0);
        sc.res_available = rng.uniform(0.0, 500.0);
        sc.loss = {rng.uniform(10.0, 200.0), rng.uniform(0.0, 8.0), rng.chance(0.5)};
        sc.mode = rng.chance(0.5) ? Mode::Ed : Mode::Uc;

        Scenario back = parse_scenario(serialize_scenario(sc));
        REQUIRE(back.fleet.size() == sc.fleet.size());
        REQUIRE(back.services.size() == sc.services.size());
        CHECK(serialize_scenario(back) == serialize_scenario(sc));
        for (std::size_t g = 0; g < sc.fleet.size(); ++g) {
            CHECK(back.fleet[g].name == sc.fleet[g].name);
            CHECK(back.fleet[g].p_max == sc.fleet[g].p_max);
            CHECK(back.fleet[g].fr_service == sc.fleet[g].fr_service);
        }
        CHECK(back.mode == sc.mode);
        CHECK(back.loss.track_largest_unit == sc.loss.track_largest_unit);
    }
}
