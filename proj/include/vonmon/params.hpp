#pragma once

// System configuration, device on-state models and the derived operating
// point of the grid-connected inverter.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vonmon {

/// Invalid or inconsistent configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical or convergence failure during a run (CLI exit code 2).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reference amplitude exceeds half the DC link voltage.
class OvermodulationError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// =============================================================================
// System parameters
// =============================================================================

/// Circuit, grid, modulation, controller and timing constants, SI units.
///
/// The sampling period is always derived from `f_sa`. `c_bus`, `r_c`, `k_pv`
/// and `k_iv` are kept for completeness; the DC link is an ideal source and
/// the outer voltage loop is replaced by a constant d-axis current reference.
struct SystemParams {
    double p_out = 5000.0;
    double v_dc = 800.0;
    double v_g_amp = 311.0;  // phase-voltage amplitude
    double c_bus = 600e-6;
    double r_c = 1e-3;
    double l_g = 6e-3;
    double r_l = 100e-3;
    double l_s = 0.0;
    double r_s = 0.0;
    double f_g = 50.0;
    double f_sw = 20e3;
    double f_sa = 20e3;
    double k_pc = 40.0;
    double k_ic = 500.0;
    double k_pv = 0.6;
    double k_iv = 13.0;
    double t_deadtime = 1e-6;
    double theta_g0 = std::numbers::pi / 2.0;

    [[nodiscard]] double t_sa() const { return 1.0 / f_sa; }
    [[nodiscard]] double omega() const { return 2.0 * std::numbers::pi * f_g; }
    [[nodiscard]] double t_sw() const { return 1.0 / f_sw; }

    /// Controller samples per fundamental cycle (validated integer).
    [[nodiscard]] int samples_per_cycle() const {
        return static_cast<int>(std::lround(f_sa / f_g));
    }

    /// Carrier periods per control step (validated integer).
    [[nodiscard]] int carriers_per_sample() const {
        return static_cast<int>(std::lround(f_sw / f_sa));
    }

    bool operator==(const SystemParams&) const = default;
};

/// Table II of the reference inverter.
[[nodiscard]] inline SystemParams default_params() { return SystemParams{}; }

namespace detail {

inline bool is_integer_ratio(double num, double den) {
    const double r = num / den;
    return r >= 1.0 && std::abs(r - std::round(r)) <= 1e-9 * r;
}

}  // namespace detail

/// Throws ConfigError when an invariant of SystemParams is violated.
inline void validate(const SystemParams& p) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string("system.") + name + " must be > 0");
        }
    };
    auto non_negative = [](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string("system.") + name + " must be >= 0");
        }
    };
    // p_out = 0 is the zero-power corner case and stays admissible
    non_negative(p.p_out, "p_out");
    positive(p.v_dc, "v_dc");
    positive(p.v_g_amp, "v_g_amp");
    positive(p.c_bus, "c_bus");
    positive(p.r_c, "r_c");
    positive(p.l_g, "l_g");
    positive(p.r_l, "r_l");
    non_negative(p.l_s, "l_s");
    non_negative(p.r_s, "r_s");
    positive(p.f_g, "f_g");
    positive(p.f_sw, "f_sw");
    positive(p.f_sa, "f_sa");
    positive(p.k_pc, "k_pc");
    positive(p.k_ic, "k_ic");
    positive(p.k_pv, "k_pv");
    positive(p.k_iv, "k_iv");
    non_negative(p.t_deadtime, "t_deadtime");
    if (!std::isfinite(p.theta_g0)) {
        throw ConfigError("system.theta_g0 must be finite");
    }
    if (!detail::is_integer_ratio(p.f_sw, p.f_g)) {
        throw ConfigError("system.f_sw must be an integer multiple of f_g");
    }
    if (!detail::is_integer_ratio(p.f_sa, p.f_g)) {
        throw ConfigError("system.f_sa must be an integer multiple of f_g");
    }
    if (!detail::is_integer_ratio(p.f_sw, p.f_sa)) {
        throw ConfigError("system.f_sw must be an integer multiple of f_sa");
    }
    if (p.t_deadtime >= 0.5 * p.t_sw()) {
        throw ConfigError("system.t_deadtime must be shorter than half a carrier period");
    }
}

// =============================================================================
// Devices
// =============================================================================

enum class Phase { a = 0, b = 1, c = 2 };

enum class LegPosition { top, bottom };

enum class DeviceKind { igbt, diode };

/// The six IGBTs and six diodes. S1/D1 and S2/D2 form the top and bottom of
/// phase A, S3/S4 phase B, S5/S6 phase C.
enum class DeviceId { S1, S2, S3, S4, S5, S6, D1, D2, D3, D4, D5, D6 };

inline constexpr std::size_t device_count = 12;

inline constexpr std::array<DeviceId, device_count> all_devices = {
    DeviceId::S1, DeviceId::S2, DeviceId::S3, DeviceId::S4, DeviceId::S5, DeviceId::S6,
    DeviceId::D1, DeviceId::D2, DeviceId::D3, DeviceId::D4, DeviceId::D5, DeviceId::D6};

[[nodiscard]] constexpr std::size_t index_of(DeviceId id) { return static_cast<std::size_t>(id); }

[[nodiscard]] constexpr DeviceKind kind_of(DeviceId id) {
    return index_of(id) < 6 ? DeviceKind::igbt : DeviceKind::diode;
}

[[nodiscard]] constexpr Phase phase_of(DeviceId id) {
    return static_cast<Phase>((index_of(id) % 6) / 2);
}

[[nodiscard]] constexpr LegPosition position_of(DeviceId id) {
    return (index_of(id) % 2) == 0 ? LegPosition::top : LegPosition::bottom;
}

[[nodiscard]] constexpr DeviceId device_at(Phase ph, LegPosition pos, DeviceKind kind) {
    const std::size_t base = kind == DeviceKind::igbt ? 0 : 6;
    const std::size_t off = 2 * static_cast<std::size_t>(ph) + (pos == LegPosition::top ? 0 : 1);
    return static_cast<DeviceId>(base + off);
}

[[nodiscard]] inline std::string to_string(DeviceId id) {
    const std::size_t i = index_of(id);
    const char prefix = i < 6 ? 'S' : 'D';
    return std::string(1, prefix) + std::to_string(i % 6 + 1);
}

[[nodiscard]] inline DeviceId parse_device_id(std::string_view s) {
    for (DeviceId id : all_devices) {
        if (to_string(id) == s) {
            return id;
        }
    }
    throw ConfigError("unknown device id '" + std::string(s) + "'");
}

[[nodiscard]] inline char to_char(Phase p) { return "ABC"[static_cast<int>(p)]; }

/// On-state model V_on = v_on0 + r_on * I.
struct DeviceOnState {
    double v_on0 = 0.75;
    double r_on = 22.5e-3;

    [[nodiscard]] double drop(double current_abs) const { return v_on0 + r_on * current_abs; }

    bool operator==(const DeviceOnState&) const = default;
};

/// On-state parameters of all twelve devices.
class DeviceHealth {
public:
    DeviceHealth() = default;

    /// Every device shares the same on-state model.
    static DeviceHealth uniform(double v_on0, double r_on) {
        DeviceHealth h;
        h.devices_.fill(DeviceOnState{v_on0, r_on});
        return h;
    }

    /// Ideal devices: no on-state drop anywhere.
    static DeviceHealth ideal() { return uniform(0.0, 0.0); }

    [[nodiscard]] const DeviceOnState& at(DeviceId id) const { return devices_[index_of(id)]; }

    void set(DeviceId id, DeviceOnState s) {
        if (!(s.v_on0 >= 0.0) || !(s.r_on >= 0.0)) {
            throw ConfigError("device " + to_string(id) + ": on-state parameters must be >= 0");
        }
        devices_[index_of(id)] = s;
    }

    /// Copy with `delta_r_on` added to the resistive part of one device.
    [[nodiscard]] DeviceHealth degraded(DeviceId id, double delta_r_on) const {
        DeviceHealth h = *this;
        DeviceOnState s = at(id);
        s.r_on += delta_r_on;
        h.set(id, s);
        return h;
    }

    bool operator==(const DeviceHealth&) const = default;

private:
    std::array<DeviceOnState, device_count> devices_{};
};

/// Table II: V_on0 = 0.75 V and R_on0 = 22.5 mOhm for every device.
[[nodiscard]] inline DeviceHealth default_health() { return DeviceHealth{}; }

/// Resistance increase at which a device is considered worn out (default 5 %).
[[nodiscard]] inline double end_of_life_delta_ron(const DeviceHealth& h, DeviceId id,
                                                  double fraction = 0.05) {
    return fraction * h.at(id).r_on;
}

// =============================================================================
// Operating point
// =============================================================================

struct OperatingPoint {
    double i_a_amp = 0.0;  // fundamental phase-current amplitude
    double m_d = 0.0;      // modulation index
    double omega = 0.0;

    bool operator==(const OperatingPoint&) const = default;
};

/// Unity power factor and linear SPWM; the filter drop is neglected.
[[nodiscard]] inline OperatingPoint operating_point(const SystemParams& p) {
    OperatingPoint op;
    op.i_a_amp = 2.0 * p.p_out / (3.0 * p.v_g_amp);
    op.m_d = p.v_g_amp / (0.5 * p.v_dc);
    op.omega = p.omega();
    if (op.m_d > 1.0) {
        throw OvermodulationError("modulation index " + std::to_string(op.m_d) +
                                  " exceeds 1 (v_g_amp > v_dc/2)");
    }
    return op;
}

}  // namespace vonmon
