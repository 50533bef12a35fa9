#pragma once

// Closed-loop time-domain simulation: sampled PI current control in the
// synchronous frame driving the averaged or switched inverter plant.

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "vonmon/control.hpp"
#include "vonmon/params.hpp"
#include "vonmon/plant.hpp"
#include "vonmon/spectrum.hpp"

namespace vonmon {

enum class Fidelity { averaged, switched };

[[nodiscard]] inline std::string_view to_string(Fidelity f) {
    return f == Fidelity::averaged ? "averaged" : "switched";
}

[[nodiscard]] inline Fidelity parse_fidelity(std::string_view s) {
    if (s == "averaged") return Fidelity::averaged;
    if (s == "switched") return Fidelity::switched;
    throw ConfigError("unknown fidelity '" + std::string(s) + "'");
}

struct SimOptions {
    Fidelity fidelity = Fidelity::averaged;
    int settle_cycles = 20;      // minimum settling prefix
    int max_settle_cycles = 200; // settling is extended up to this until settled
    int n_cycles = 10;
    int n_over = 200;  // micro-steps per carrier period (switched)
    bool warm_start = true;
    std::vector<GridHarmonic> grid_harmonics;
};

/// Largest cycle-to-cycle RMS current change accepted at the end of settling.
inline constexpr double settle_tolerance = 1e-6;

namespace detail {

/// Fundamental amplitude of the bridge voltage lost to on-state drops, using
/// the mean device model, plus the deadtime volt-second loss when switching.
inline double fundamental_drop(const SystemParams& p, const DeviceHealth& h, double i_amp,
                               Fidelity fidelity) {
    double v_on0 = 0.0;
    double r_on = 0.0;
    for (DeviceId id : all_devices) {
        v_on0 += h.at(id).v_on0;
        r_on += h.at(id).r_on;
    }
    v_on0 /= device_count;
    r_on /= device_count;
    double drop = r_on * i_amp;
    if (i_amp > 0.0) drop += 4.0 / std::numbers::pi * v_on0;
    if (fidelity == Fidelity::switched && i_amp > 0.0) {
        drop += 4.0 / std::numbers::pi * p.t_deadtime * p.f_sw * p.v_dc;
    }
    return drop;
}

}  // namespace detail

/// Runs the loop for at least settle_cycles fundamental cycles, extending the
/// settling prefix one cycle at a time (up to max_settle_cycles) until the
/// cycle-to-cycle RMS current change falls below settle_tolerance, then logs
/// n_cycles more for analysis. All controller-rate signals are logged and
/// meta.settle_cycles records the prefix actually used.
///
/// The current sampled at t_n produces a reference that is applied over
/// [t_n+1, t_n+2); the inverse Park transform advances the angle by 1.5
/// samples to account for that delay. The d-axis current
/// reference is the unity power factor amplitude, q-axis reference zero.
[[nodiscard]] inline SimTrace simulate(const SystemParams& p, const DeviceHealth& health,
                                       const SimOptions& opt) {
    validate(p);
    if (opt.settle_cycles < 0 || opt.n_cycles < 1) {
        throw ConfigError("simulation needs settle_cycles >= 0 and n_cycles >= 1");
    }
    if (opt.n_over < 1) throw ConfigError("n_over must be >= 1");
    const OperatingPoint op = operating_point(p);
    const int spc = p.samples_per_cycle();
    const int total = (std::max(opt.settle_cycles, opt.max_settle_cycles) + opt.n_cycles) * spc;
    const double ts = p.t_sa();
    const double w = p.omega();
    const double advance = 1.5 * w * ts;
    const PiGains gains = PiGains::from(p);
    const Plant plant(p, health, GridModel::from(p, opt.grid_harmonics));

    SimTrace tr;
    tr.sample_period = ts;
    tr.meta.params = p;
    tr.meta.health = health;
    tr.meta.n_cycles = opt.n_cycles;
    for (auto& ch : tr.channels) ch.reserve(static_cast<std::size_t>(total));

    ControllerState ctl;
    PlantState ps;
    ModulatorState mod{};
    Abc duty_pending{0.5, 0.5, 0.5};

    if (opt.warm_start) {
        const double r = p.r_l + p.r_s;
        const double l = p.l_g + p.l_s;
        for (int k = 0; k < 3; ++k) {
            ps.i[k] = op.i_a_amp * std::sin(p.theta_g0 - k * two_pi_over_3);
        }
        ctl.integrator_d =
            p.v_g_amp + r * op.i_a_amp + detail::fundamental_drop(p, health, op.i_a_amp, opt.fidelity);
        ctl.integrator_q = w * l * op.i_a_amp;
        const Dq0 v0{ctl.integrator_d, ctl.integrator_q, 0.0};
        ctl.last_v_ref = v0;
        // reference computed one sample before t = 0
        duty_pending = spwm_duties(inv_park(dq_angle(-ts, w, p.theta_g0) + advance, v0), p.v_dc);
    }

    const double two_pi = 2.0 * std::numbers::pi;
    auto step = [&](int n) {
        const double t = n * ts;
        const double th = dq_angle(t, w, p.theta_g0);
        ps.t = t;

        const Dq0 i_dq = park(th, ps.i);
        const Dq0 err{op.i_a_amp - i_dq.d, -i_dq.q, 0.0};
        const PiStep st = pi_step(ctl, err, ts, gains);
        ctl = st.state;
        tr.meta.saturated = tr.meta.saturated || st.clamped;
        const Abc v_abc = inv_park(th + advance, st.v_ref);

        tr.channel(Channel::i_a).push_back(ps.i[0]);
        tr.channel(Channel::i_b).push_back(ps.i[1]);
        tr.channel(Channel::i_c).push_back(ps.i[2]);
        tr.channel(Channel::v_d_ref).push_back(st.v_ref.d);
        tr.channel(Channel::v_q_ref).push_back(st.v_ref.q);
        tr.channel(Channel::v_a_ref).push_back(v_abc[0]);
        tr.channel(Channel::v_b_ref).push_back(v_abc[1]);
        tr.channel(Channel::v_c_ref).push_back(v_abc[2]);
        double wrapped = std::fmod(th, two_pi);
        if (wrapped < 0.0) wrapped += two_pi;
        tr.channel(Channel::theta).push_back(wrapped);

        if (opt.fidelity == Fidelity::averaged) {
            ps = plant.step_averaged(ps, duty_pending, ts);
        } else {
            for (int c = 0; c < p.carriers_per_sample(); ++c) {
                ps = plant.step_switched(ps, mod, duty_pending, opt.n_over);
            }
        }
        duty_pending = spwm_duties(v_abc, p.v_dc);
    };

    int n = 0;
    auto run_cycle = [&] {
        for (int k = 0; k < spc; ++k, ++n) step(n);
    };
    // RMS change of the phase currents between the last two logged cycles
    auto cycle_change = [&] {
        const auto last = static_cast<std::size_t>(n - spc);
        double acc = 0.0;
        for (Channel c : {Channel::i_a, Channel::i_b, Channel::i_c}) {
            const auto& x = tr.channel(c);
            for (int k = 0; k < spc; ++k) {
                const double diff = x[last + k] - x[last + k - spc];
                acc += diff * diff;
            }
        }
        return std::sqrt(acc / (3.0 * spc));
    };

    int settle = 0;
    for (; settle < opt.settle_cycles; ++settle) run_cycle();
    if (settle >= 2) {
        tr.meta.settle_rms_delta = cycle_change();
        while (!(tr.meta.settle_rms_delta < settle_tolerance) && settle < opt.max_settle_cycles) {
            run_cycle();
            ++settle;
            tr.meta.settle_rms_delta = cycle_change();
        }
    }
    tr.meta.settle_cycles = settle;
    for (int c = 0; c < opt.n_cycles; ++c) run_cycle();
    return tr;
}

/// Throws NumericalError when the run had not reached periodic steady state by
/// the end of the settling prefix.
inline void require_settled(const SimTrace& tr, double tol = settle_tolerance) {
    if (tr.meta.settle_cycles >= 2 && !(tr.meta.settle_rms_delta < tol)) {
        throw NumericalError("simulation did not settle: cycle-to-cycle RMS current change " +
                             std::to_string(tr.meta.settle_rms_delta) + " A");
    }
}

struct PairedRun {
    SimTrace healthy;
    SimTrace degraded;
};

/// Healthy baseline and degraded run from identical initial conditions.
[[nodiscard]] inline PairedRun simulate_paired(const SystemParams& p, const DeviceHealth& health,
                                               DeviceId device, double delta_r_on,
                                               const SimOptions& opt) {
    if (!(delta_r_on >= 0.0)) throw ConfigError("delta_r_on must be >= 0");
    auto degraded = std::async(std::launch::async, [&] {
        return simulate(p, health.degraded(device, delta_r_on), opt);
    });
    PairedRun run;
    run.healthy = simulate(p, health, opt);
    run.degraded = degraded.get();
    return run;
}

}  // namespace vonmon
