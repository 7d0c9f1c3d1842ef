#pragma once

// Domain types for frequency-secured market clearing: frequency limits,
// FR service definitions, generator fleets, scenarios, and the derived
// system quantities (post-fault inertia, largest loss).
//
// Scenario files are JSON with snake_case keys matching the field names
// below. Units: MW, s, Hz, GBP/MWh, GBP/h.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fresco {

/// Raised by parse_scenario with the offending field path in what().
class ScenarioError : public std::runtime_error {
  public:
    ScenarioError(const std::string& path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(path) {}
    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

struct FrequencyLimits {
    double f0 = 50.0;          // nominal frequency (Hz)
    double rocof_max = 1.0;    // max admissible RoCoF (Hz/s)
    double delta_f_max = 0.8;  // max admissible nadir deviation (Hz)
};

struct FrServiceSpec {
    std::string name;
    double delivery_time = 0.0;  // ramp duration (s)
    double delay = 0.0;          // activation delay before the ramp starts (s)

    double completion_time() const { return delay + delivery_time; }
};

struct GeneratorType {
    std::string name;
    int unit_count = 1;
    double p_min = 0.0;        // MSG per unit (MW)
    double p_max = 0.0;        // capacity per unit (MW)
    double fr_capacity = 0.0;  // max FR for the whole type (MW)
    std::optional<std::string> fr_service;
    double inertia_const = 0.0;  // H_g (s)
    double marginal_cost = 0.0;  // GBP/MWh
    double no_load_cost = 0.0;   // GBP/h
    bool is_largest_infeed = false;
};

struct LossSpec {
    double p_loss_max = 0.0;         // upper bound for the largest infeed (MW)
    double inertia_const_loss = 0.0; // inertia constant of the lost unit (s)
    // When true the loss is a decision variable tied to the per-unit output
    // of the generator type flagged is_largest_infeed; otherwise it is the
    // fixed parameter p_loss_max.
    bool track_largest_unit = false;
};

enum class Mode { Ed, Uc };

struct Scenario {
    FrequencyLimits limits;
    std::vector<GeneratorType> fleet;
    std::vector<FrServiceSpec> services;
    double demand = 0.0;         // MW
    double res_available = 0.0;  // MW
    LossSpec loss;
    Mode mode = Mode::Ed;

    int service_index(const std::string& name) const {
        for (std::size_t i = 0; i < services.size(); ++i)
            if (services[i].name == name) return static_cast<int>(i);
        return -1;
    }
    int largest_infeed_index() const {
        for (std::size_t g = 0; g < fleet.size(); ++g)
            if (fleet[g].is_largest_infeed) return static_cast<int>(g);
        return -1;
    }
};

/// Snapshot of the quantities that drive post-fault dynamics.
struct SystemState {
    double inertia = 0.0;            // H (MW*s)
    double loss_size = 0.0;          // P_L (MW)
    std::vector<double> fr_amounts;  // R_i per service (MW)
};

/// Post-fault system inertia for a given commitment (counts per type, may be
/// fractional for the relaxed pricing solve):
///   sum_g H_g * p_max_g * y_g  -  p_loss_max * H_L.
/// The caller decides whether a non-positive result is an error; a fleet
/// with no committed units and H_L = 0 legitimately evaluates to zero.
inline double system_inertia(std::span<const double> commitment, const Scenario& sc) {
    double h = 0.0;
    for (std::size_t g = 0; g < sc.fleet.size() && g < commitment.size(); ++g)
        h += sc.fleet[g].inertia_const * sc.fleet[g].p_max * commitment[g];
    return h - sc.loss.p_loss_max * sc.loss.inertia_const_loss;
}

/// Inertia with every unit committed; the fixed-H value used by ED clearing.
inline double full_commitment_inertia(const Scenario& sc) {
    std::vector<double> full;
    full.reserve(sc.fleet.size());
    for (const auto& g : sc.fleet) full.push_back(static_cast<double>(g.unit_count));
    return system_inertia(full, sc);
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const std::string& path,
                                           const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ScenarioError(path + "." + key, "missing field");
    return *it;
}

inline double number_field(const nlohmann::json& j, const std::string& path, const char* key) {
    const auto& v = require_field(j, path, key);
    if (!v.is_number()) throw ScenarioError(path + "." + key, "expected a number");
    return v.get<double>();
}

inline std::string string_field(const nlohmann::json& j, const std::string& path,
                                const char* key) {
    const auto& v = require_field(j, path, key);
    if (!v.is_string()) throw ScenarioError(path + "." + key, "expected a string");
    return v.get<std::string>();
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError("$", std::string("invalid JSON: ") + e.what());
    }

    Scenario sc;

    const auto& jl = detail::require_field(j, "$", "limits");
    sc.limits.f0 = detail::number_field(jl, "limits", "f0");
    sc.limits.rocof_max = detail::number_field(jl, "limits", "rocof_max");
    sc.limits.delta_f_max = detail::number_field(jl, "limits", "delta_f_max");
    if (sc.limits.f0 <= 0) throw ScenarioError("limits.f0", "must be positive");
    if (sc.limits.rocof_max <= 0) throw ScenarioError("limits.rocof_max", "must be positive");
    if (sc.limits.delta_f_max <= 0) throw ScenarioError("limits.delta_f_max", "must be positive");

    const auto& js = detail::require_field(j, "$", "services");
    if (!js.is_array()) throw ScenarioError("services", "expected an array");
    for (std::size_t i = 0; i < js.size(); ++i) {
        std::string path = "services[" + std::to_string(i) + "]";
        FrServiceSpec s;
        s.name = detail::string_field(js[i], path, "name");
        s.delivery_time = detail::number_field(js[i], path, "delivery_time");
        s.delay = js[i].contains("delay") ? detail::number_field(js[i], path, "delay") : 0.0;
        if (s.delivery_time <= 0)
            throw ScenarioError(path + ".delivery_time", "delivery_time must be positive");
        if (s.delay < 0) throw ScenarioError(path + ".delay", "delay must be non-negative");
        for (const auto& prev : sc.services)
            if (prev.name == s.name)
                throw ScenarioError(path + ".name", "duplicate service name '" + s.name + "'");
        sc.services.push_back(std::move(s));
    }
    // Canonical service order: by (delay, completion time). The builder of the
    // delayed-case nadir constraints relies on this key being strictly ordered.
    std::stable_sort(sc.services.begin(), sc.services.end(),
                     [](const FrServiceSpec& a, const FrServiceSpec& b) {
                         if (a.delay != b.delay) return a.delay < b.delay;
                         return a.completion_time() < b.completion_time();
                     });
    for (std::size_t i = 1; i < sc.services.size(); ++i) {
        if (sc.services[i].delay == sc.services[i - 1].delay &&
            sc.services[i].completion_time() == sc.services[i - 1].completion_time())
            throw ScenarioError("services",
                                "services '" + sc.services[i - 1].name + "' and '" +
                                    sc.services[i].name +
                                    "' have identical dynamics; merge them into one service");
    }

    const auto& jf = detail::require_field(j, "$", "fleet");
    if (!jf.is_array()) throw ScenarioError("fleet", "expected an array");
    for (std::size_t i = 0; i < jf.size(); ++i) {
        std::string path = "fleet[" + std::to_string(i) + "]";
        GeneratorType g;
        g.name = detail::string_field(jf[i], path, "name");
        const auto& uc = detail::require_field(jf[i], path, "unit_count");
        if (!uc.is_number_integer() || uc.get<long long>() < 1)
            throw ScenarioError(path + ".unit_count", "must be an integer >= 1");
        g.unit_count = uc.get<int>();
        g.p_min = detail::number_field(jf[i], path, "p_min");
        g.p_max = detail::number_field(jf[i], path, "p_max");
        g.fr_capacity = detail::number_field(jf[i], path, "fr_capacity");
        g.inertia_const = detail::number_field(jf[i], path, "inertia_const");
        g.marginal_cost = detail::number_field(jf[i], path, "marginal_cost");
        g.no_load_cost = detail::number_field(jf[i], path, "no_load_cost");
        if (jf[i].contains("is_largest_infeed")) {
            if (!jf[i]["is_largest_infeed"].is_boolean())
                throw ScenarioError(path + ".is_largest_infeed", "expected a boolean");
            g.is_largest_infeed = jf[i]["is_largest_infeed"].get<bool>();
        }
        if (jf[i].contains("fr_service") && !jf[i]["fr_service"].is_null()) {
            if (!jf[i]["fr_service"].is_string())
                throw ScenarioError(path + ".fr_service", "expected a string or null");
            g.fr_service = jf[i]["fr_service"].get<std::string>();
            if (sc.service_index(*g.fr_service) < 0)
                throw ScenarioError(path + ".fr_service",
                                    "unknown service '" + *g.fr_service + "'");
        }
        if (g.p_min < 0 || g.p_min > g.p_max)
            throw ScenarioError(path, "power range must satisfy 0 <= p_min <= p_max");
        if (g.fr_capacity < 0) throw ScenarioError(path + ".fr_capacity", "must be non-negative");
        if (g.inertia_const < 0)
            throw ScenarioError(path + ".inertia_const", "must be non-negative");
        for (const auto& prev : sc.fleet)
            if (prev.name == g.name)
                throw ScenarioError(path + ".name", "duplicate generator name '" + g.name + "'");
        sc.fleet.push_back(std::move(g));
    }

    sc.demand = detail::number_field(j, "$", "demand");
    if (sc.demand < 0) throw ScenarioError("demand", "must be non-negative");
    sc.res_available =
        j.contains("res_available") ? detail::number_field(j, "$", "res_available") : 0.0;
    if (sc.res_available < 0) throw ScenarioError("res_available", "must be non-negative");

    const auto& jloss = detail::require_field(j, "$", "loss");
    sc.loss.p_loss_max = detail::number_field(jloss, "loss", "p_loss_max");
    sc.loss.inertia_const_loss = detail::number_field(jloss, "loss", "inertia_const_loss");
    if (sc.loss.p_loss_max < 0) throw ScenarioError("loss.p_loss_max", "must be non-negative");
    if (sc.loss.inertia_const_loss < 0)
        throw ScenarioError("loss.inertia_const_loss", "must be non-negative");
    if (jloss.contains("track_largest_unit")) {
        if (!jloss["track_largest_unit"].is_boolean())
            throw ScenarioError("loss.track_largest_unit", "expected a boolean");
        sc.loss.track_largest_unit = jloss["track_largest_unit"].get<bool>();
    }

    std::string mode = detail::string_field(j, "$", "mode");
    if (mode == "ED") sc.mode = Mode::Ed;
    else if (mode == "UC") sc.mode = Mode::Uc;
    else throw ScenarioError("mode", "must be \"ED\" or \"UC\"");

    int flagged = 0;
    for (const auto& g : sc.fleet) flagged += g.is_largest_infeed ? 1 : 0;
    if (sc.loss.track_largest_unit && flagged == 0)
        throw ScenarioError("loss.track_largest_unit",
                            "no generator type flagged is_largest_infeed");
    if (flagged > 1)
        throw ScenarioError("fleet", "more than one generator type flagged is_largest_infeed");

    return sc;
}

inline std::string serialize_scenario(const Scenario& sc) {
    nlohmann::ordered_json j;
    j["limits"] = {{"f0", sc.limits.f0},
                   {"rocof_max", sc.limits.rocof_max},
                   {"delta_f_max", sc.limits.delta_f_max}};
    j["services"] = nlohmann::ordered_json::array();
    for (const auto& s : sc.services)
        j["services"].push_back(
            {{"name", s.name}, {"delivery_time", s.delivery_time}, {"delay", s.delay}});
    j["fleet"] = nlohmann::ordered_json::array();
    for (const auto& g : sc.fleet) {
        nlohmann::ordered_json jg{{"name", g.name},
                                  {"unit_count", g.unit_count},
                                  {"p_min", g.p_min},
                                  {"p_max", g.p_max},
                                  {"fr_capacity", g.fr_capacity},
                                  {"fr_service", nullptr},
                                  {"inertia_const", g.inertia_const},
                                  {"marginal_cost", g.marginal_cost},
                                  {"no_load_cost", g.no_load_cost},
                                  {"is_largest_infeed", g.is_largest_infeed}};
        if (g.fr_service) jg["fr_service"] = *g.fr_service;
        j["fleet"].push_back(std::move(jg));
    }
    j["demand"] = sc.demand;
    j["res_available"] = sc.res_available;
    j["loss"] = {{"p_loss_max", sc.loss.p_loss_max},
                 {"inertia_const_loss", sc.loss.inertia_const_loss},
                 {"track_largest_unit", sc.loss.track_largest_unit}};
    j["mode"] = sc.mode == Mode::Ed ? "ED" : "UC";
    return j.dump(2) + "\n";
}

}  // namespace fresco
