#pragma once

// Scenario description and its JSON configuration file:
//
//   { "system":   { "p_out": 5000, ... },
//     "health":   { "S1_v_on0": 0.75, "S1_r_on": 0.0225, ... },
//     "scenario": { "degraded_device": "S1", "delta_r_on": 0.001, ... } }
//
// Every section and key is optional and falls back to the defaults; unknown
// keys are rejected.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include "json.hpp"
#include "vonmon/params.hpp"
#include "vonmon/plant.hpp"
#include "vonmon/simulation.hpp"

namespace vonmon {

using Json = nlohmann::json;

struct Scenario {
    SystemParams params;
    DeviceHealth health;
    DeviceId degraded_device = DeviceId::S1;
    double delta_r_on = 1e-3;
    SimOptions sim;
    std::filesystem::path out_dir = "out";
};

inline constexpr std::array<std::pair<std::string_view, double SystemParams::*>, 18> system_fields{{
    {"p_out", &SystemParams::p_out},
    {"v_dc", &SystemParams::v_dc},
    {"v_g_amp", &SystemParams::v_g_amp},
    {"c_bus", &SystemParams::c_bus},
    {"r_c", &SystemParams::r_c},
    {"l_g", &SystemParams::l_g},
    {"r_l", &SystemParams::r_l},
    {"l_s", &SystemParams::l_s},
    {"r_s", &SystemParams::r_s},
    {"f_g", &SystemParams::f_g},
    {"f_sw", &SystemParams::f_sw},
    {"f_sa", &SystemParams::f_sa},
    {"k_pc", &SystemParams::k_pc},
    {"k_ic", &SystemParams::k_ic},
    {"k_pv", &SystemParams::k_pv},
    {"k_iv", &SystemParams::k_iv},
    {"t_deadtime", &SystemParams::t_deadtime},
    {"theta_g0", &SystemParams::theta_g0},
}};

namespace detail {

inline double number(const Json& v, std::string_view where) {
    if (!v.is_number()) throw ConfigError(std::string(where) + " must be numeric");
    return v.get<double>();
}

inline int integer(const Json& v, std::string_view where) {
    const double x = number(v, where);
    if (x != std::floor(x)) throw ConfigError(std::string(where) + " must be an integer");
    return static_cast<int>(x);
}

inline const Json& section(const Json& doc, std::string_view name) {
    static const Json empty = Json::object();
    auto it = doc.find(name);
    if (it == doc.end()) return empty;
    if (!it->is_object()) throw ConfigError("section '" + std::string(name) + "' must be an object");
    return *it;
}

}  // namespace detail

// =============================================================================
// System
// =============================================================================

[[nodiscard]] inline Json to_json(const SystemParams& p) {
    Json j = Json::object();
    for (const auto& [name, member] : system_fields) j[std::string(name)] = p.*member;
    return j;
}

[[nodiscard]] inline SystemParams system_from_json(const Json& j) {
    SystemParams p;
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const auto& [name, member] : system_fields) {
            if (key == name) {
                p.*member = detail::number(value, "system." + key);
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown key 'system." + key + "'");
    }
    validate(p);
    return p;
}

/// Text form of a SystemParams. Doubles are written in shortest round-trip
/// form, so parse(serialize(p)) == p bit for bit.
[[nodiscard]] inline std::string serialize(const SystemParams& p) { return to_json(p).dump(2); }

[[nodiscard]] inline SystemParams parse_system(std::string_view text) {
    try {
        return system_from_json(Json::parse(text));
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed system parameters: ") + e.what());
    }
}

// =============================================================================
// Health
// =============================================================================

[[nodiscard]] inline Json to_json(const DeviceHealth& h) {
    Json j = Json::object();
    for (DeviceId id : all_devices) {
        j[to_string(id) + "_v_on0"] = h.at(id).v_on0;
        j[to_string(id) + "_r_on"] = h.at(id).r_on;
    }
    return j;
}

[[nodiscard]] inline DeviceHealth health_from_json(const Json& j) {
    DeviceHealth h = default_health();
    for (const auto& [key, value] : j.items()) {
        const auto us = key.find('_');
        if (us == std::string::npos) throw ConfigError("unknown key 'health." + key + "'");
        DeviceId id;
        try {
            id = parse_device_id(key.substr(0, us));
        } catch (const ConfigError&) {
            throw ConfigError("unknown key 'health." + key + "'");
        }
        const std::string field = key.substr(us + 1);
        DeviceOnState s = h.at(id);
        if (field == "v_on0") {
            s.v_on0 = detail::number(value, "health." + key);
        } else if (field == "r_on") {
            s.r_on = detail::number(value, "health." + key);
        } else {
            throw ConfigError("unknown key 'health." + key + "'");
        }
        h.set(id, s);
    }
    return h;
}

// =============================================================================
// Scenario
// =============================================================================

[[nodiscard]] inline Json to_json(const Scenario& s) {
    Json sc = Json::object();
    sc["degraded_device"] = to_string(s.degraded_device);
    sc["delta_r_on"] = s.delta_r_on;
    sc["fidelity"] = std::string(to_string(s.sim.fidelity));
    sc["n_cycles"] = s.sim.n_cycles;
    sc["settle_cycles"] = s.sim.settle_cycles;
    sc["max_settle_cycles"] = s.sim.max_settle_cycles;
    sc["n_over"] = s.sim.n_over;
    sc["warm_start"] = s.sim.warm_start ? 1 : 0;
    Json gh = Json::array();
    for (const auto& h : s.sim.grid_harmonics) gh.push_back({h.order, h.amplitude, h.phase});
    sc["grid_harmonics"] = gh;
    return Json{{"system", to_json(s.params)}, {"health", to_json(s.health)}, {"scenario", sc}};
}

[[nodiscard]] inline Scenario scenario_from_json(const Json& doc) {
    if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (key != "system" && key != "health" && key != "scenario") {
            throw ConfigError("unknown section '" + key + "'");
        }
    }
    Scenario s;
    s.params = system_from_json(detail::section(doc, "system"));
    s.health = health_from_json(detail::section(doc, "health"));
    for (const auto& [key, value] : detail::section(doc, "scenario").items()) {
        const std::string where = "scenario." + key;
        if (key == "degraded_device") {
            if (!value.is_string()) throw ConfigError(where + " must be a device id string");
            s.degraded_device = parse_device_id(value.get<std::string>());
        } else if (key == "delta_r_on") {
            s.delta_r_on = detail::number(value, where);
            if (!(s.delta_r_on >= 0.0)) throw ConfigError(where + " must be >= 0");
        } else if (key == "fidelity") {
            if (!value.is_string()) throw ConfigError(where + " must be 'averaged' or 'switched'");
            s.sim.fidelity = parse_fidelity(value.get<std::string>());
        } else if (key == "n_cycles") {
            s.sim.n_cycles = detail::integer(value, where);
        } else if (key == "settle_cycles") {
            s.sim.settle_cycles = detail::integer(value, where);
        } else if (key == "max_settle_cycles") {
            s.sim.max_settle_cycles = detail::integer(value, where);
        } else if (key == "n_over") {
            s.sim.n_over = detail::integer(value, where);
        } else if (key == "warm_start") {
            s.sim.warm_start = detail::integer(value, where) != 0;
        } else if (key == "grid_harmonics") {
            if (!value.is_array()) throw ConfigError(where + " must be an array");
            s.sim.grid_harmonics.clear();
            for (const auto& h : value) {
                if (!h.is_array() || h.size() != 3) {
                    throw ConfigError(where + " entries must be [order, amplitude, phase]");
                }
                s.sim.grid_harmonics.push_back({detail::integer(h[0], where),
                                                detail::number(h[1], where),
                                                detail::number(h[2], where)});
            }
        } else {
            throw ConfigError("unknown key '" + where + "'");
        }
    }
    if (s.sim.n_cycles < 1) throw ConfigError("scenario.n_cycles must be >= 1");
    if (s.sim.settle_cycles < 0) throw ConfigError("scenario.settle_cycles must be >= 0");
    if (s.sim.n_over < 1) throw ConfigError("scenario.n_over must be >= 1");
    return s;
}

[[nodiscard]] inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    try {
        return scenario_from_json(Json::parse(in, nullptr, true, true));
    } catch (const Json::exception& e) {
        throw ConfigError("malformed config '" + path.string() + "': " + e.what());
    }
}

inline void save_scenario(const std::filesystem::path& path, const Scenario& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << to_json(s).dump(2) << '\n';
}

/// FNV-1a hash of the canonical params + health text.
[[nodiscard]] inline std::uint64_t config_digest(const SystemParams& p, const DeviceHealth& h) {
    const std::string text = Json{{"system", to_json(p)}, {"health", to_json(h)}}.dump();
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

/// Flattened key=value lines of a JSON object ("system.p_out=5000").
[[nodiscard]] inline std::string flatten_key_values(const Json& j, const std::string& prefix = "") {
    std::ostringstream os;
    for (const auto& [key, value] : j.items()) {
        const std::string name = prefix.empty() ? key : prefix + "." + key;
        if (value.is_object()) {
            os << flatten_key_values(value, name);
        } else if (value.is_string()) {
            os << name << '=' << value.get<std::string>() << '\n';
        } else {
            os << name << '=' << value.dump() << '\n';
        }
    }
    return os.str();
}

}  // namespace vonmon
