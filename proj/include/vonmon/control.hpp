#pragma once

// Reference-frame transforms, the synchronous-frame PI current controller and
// sinusoidal PWM duty generation.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "vonmon/params.hpp"

namespace vonmon {

using Abc = std::array<double, 3>;

struct Dq0 {
    double d = 0.0;
    double q = 0.0;
    double zero = 0.0;

    bool operator==(const Dq0&) const = default;
};

inline constexpr double two_pi_over_3 = 2.0 * std::numbers::pi / 3.0;

/// Amplitude-invariant Park transform. A balanced set a = cos(theta), ... maps
/// to d = 1, q = 0.
[[nodiscard]] inline Dq0 park(double theta, const Abc& x) {
    const double ca = std::cos(theta);
    const double cb = std::cos(theta - two_pi_over_3);
    const double cc = std::cos(theta + two_pi_over_3);
    const double sa = std::sin(theta);
    const double sb = std::sin(theta - two_pi_over_3);
    const double sc = std::sin(theta + two_pi_over_3);
    return Dq0{
        (2.0 / 3.0) * (x[0] * ca + x[1] * cb + x[2] * cc),
        -(2.0 / 3.0) * (x[0] * sa + x[1] * sb + x[2] * sc),
        (x[0] + x[1] + x[2]) / 3.0,
    };
}

/// Inverse of `park`.
[[nodiscard]] inline Abc inv_park(double theta, const Dq0& v) {
    Abc out{};
    for (int k = 0; k < 3; ++k) {
        const double ang = theta - k * two_pi_over_3;
        out[k] = v.d * std::cos(ang) - v.q * std::sin(ang) + v.zero;
    }
    return out;
}

/// Synchronous-frame angle at time t. The grid phase-A voltage is
/// sin(wt + theta_g0), so the d axis sits pi/2 behind it and a unity power
/// factor current appears purely on d.
[[nodiscard]] inline double dq_angle(double t, double omega, double theta_g0) {
    return omega * t + theta_g0 - 0.5 * std::numbers::pi;
}

// =============================================================================
// PI current controller
// =============================================================================

struct PiGains {
    double k_p = 0.0;
    double k_i = 0.0;
    double limit = 0.0;  // per-axis output clamp (symmetric)

    static PiGains from(const SystemParams& p) { return {p.k_pc, p.k_ic, 0.5 * p.v_dc}; }
};

struct ControllerState {
    double integrator_d = 0.0;
    double integrator_q = 0.0;
    Dq0 last_v_ref{};

    bool operator==(const ControllerState&) const = default;
};

struct PiStep {
    ControllerState state;
    Dq0 v_ref;
    bool clamped = false;
};

/// One backward-Euler PI update per axis. No decoupling, no feedforward; the
/// output is clamped to +-limit without further anti-windup.
[[nodiscard]] inline PiStep pi_step(const ControllerState& state, const Dq0& err, double t_sa,
                                    const PiGains& gains) {
    PiStep out;
    out.state = state;
    out.state.integrator_d += gains.k_i * err.d * t_sa;
    out.state.integrator_q += gains.k_i * err.q * t_sa;

    auto clamp = [&](double v) {
        if (v > gains.limit) {
            out.clamped = true;
            return gains.limit;
        }
        if (v < -gains.limit) {
            out.clamped = true;
            return -gains.limit;
        }
        return v;
    };
    out.v_ref.d = clamp(gains.k_p * err.d + out.state.integrator_d);
    out.v_ref.q = clamp(gains.k_p * err.q + out.state.integrator_q);
    out.state.last_v_ref = out.v_ref;
    return out;
}

/// Duty ratio of the top switch per phase: 0.5 + v/v_dc, clamped to [0, 1].
[[nodiscard]] inline Abc spwm_duties(const Abc& v_ref, double v_dc) {
    Abc d{};
    for (int k = 0; k < 3; ++k) {
        d[k] = std::clamp(0.5 + v_ref[k] / v_dc, 0.0, 1.0);
    }
    return d;
}

}  // namespace vonmon
