#pragma once

// Inverter bridge with per-device on-state drops, RL filter and stiff grid.
// Two fidelities: duty-averaged (one update per control step) and switched
// (triangular carrier, deadtime, micro-stepped).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "vonmon/control.hpp"
#include "vonmon/params.hpp"

namespace vonmon {

struct PlantState {
    Abc i{};  // filter inductor currents
    double t = 0.0;

    bool operator==(const PlantState&) const = default;
};

// =============================================================================
// Leg conduction
// =============================================================================

/// Gate command seen by one leg. `blanking` is the deadtime interval with both
/// switches off.
enum class LegGate { top_on, bottom_on, blanking };

struct LegDevices {
    DeviceOnState top_igbt;
    DeviceOnState top_diode;
    DeviceOnState bottom_igbt;
    DeviceOnState bottom_diode;
};

[[nodiscard]] inline LegDevices leg_devices(const DeviceHealth& h, Phase ph) {
    return LegDevices{
        h.at(device_at(ph, LegPosition::top, DeviceKind::igbt)),
        h.at(device_at(ph, LegPosition::top, DeviceKind::diode)),
        h.at(device_at(ph, LegPosition::bottom, DeviceKind::igbt)),
        h.at(device_at(ph, LegPosition::bottom, DeviceKind::diode)),
    };
}

enum class Conducting { top_igbt, top_diode, bottom_igbt, bottom_diode, none };

struct LegConduction {
    Phase phase = Phase::a;
    Conducting device = Conducting::none;
    double v_drop = 0.0;
};

struct LegOutput {
    double voltage = 0.0;  // pole voltage w.r.t. the negative DC rail
    LegConduction conduction;
};

/// Pole voltage for a gate state and phase current (positive out of the leg).
/// Zero current conducts through nothing and adds no drop; a blanked leg at
/// zero current is taken to sit at mid-rail.
[[nodiscard]] inline LegOutput leg_output_voltage(LegGate gate, double i_phase,
                                                  const LegDevices& leg, double v_dc,
                                                  Phase ph = Phase::a) {
    LegOutput out;
    out.conduction.phase = ph;
    const double mag = std::abs(i_phase);
    auto take = [&](Conducting dev, const DeviceOnState& s, double rail, double sign) {
        out.conduction.device = dev;
        out.conduction.v_drop = s.drop(mag);
        out.voltage = rail + sign * out.conduction.v_drop;
    };
    if (i_phase > 0.0) {
        if (gate == LegGate::top_on) {
            take(Conducting::top_igbt, leg.top_igbt, v_dc, -1.0);
        } else {
            take(Conducting::bottom_diode, leg.bottom_diode, 0.0, -1.0);
        }
    } else if (i_phase < 0.0) {
        if (gate == LegGate::bottom_on) {
            take(Conducting::bottom_igbt, leg.bottom_igbt, 0.0, +1.0);
        } else {
            take(Conducting::top_diode, leg.top_diode, v_dc, +1.0);
        }
    } else {
        switch (gate) {
        case LegGate::top_on: out.voltage = v_dc; break;
        case LegGate::bottom_on: out.voltage = 0.0; break;
        case LegGate::blanking: out.voltage = 0.5 * v_dc; break;
        }
    }
    return out;
}

[[nodiscard]] inline LegOutput leg_output_voltage(bool gate_high, double i_phase,
                                                  const LegDevices& leg, double v_dc,
                                                  Phase ph = Phase::a) {
    return leg_output_voltage(gate_high ? LegGate::top_on : LegGate::bottom_on, i_phase, leg,
                              v_dc, ph);
}

[[nodiscard]] inline DeviceId conducting_device_id(const LegConduction& c) {
    switch (c.device) {
    case Conducting::top_igbt: return device_at(c.phase, LegPosition::top, DeviceKind::igbt);
    case Conducting::top_diode: return device_at(c.phase, LegPosition::top, DeviceKind::diode);
    case Conducting::bottom_igbt:
        return device_at(c.phase, LegPosition::bottom, DeviceKind::igbt);
    case Conducting::bottom_diode:
        return device_at(c.phase, LegPosition::bottom, DeviceKind::diode);
    case Conducting::none: break;
    }
    throw std::logic_error("no device conducts");
}

// =============================================================================
// Grid
// =============================================================================

/// Harmonic of the grid voltage: amplitude * sin(order * phase_angle + phase).
struct GridHarmonic {
    int order = 0;
    double amplitude = 0.0;
    double phase = 0.0;

    bool operator==(const GridHarmonic&) const = default;
};

/// Stiff three-phase source, phase x: V sin(wt + theta_g0 - x*2pi/3) plus
/// optional harmonics.
struct GridModel {
    double amplitude = 0.0;
    double omega = 0.0;
    double theta_g0 = 0.0;
    std::vector<GridHarmonic> harmonics;

    static GridModel from(const SystemParams& p, std::vector<GridHarmonic> harmonics = {}) {
        return GridModel{p.v_g_amp, p.omega(), p.theta_g0, std::move(harmonics)};
    }

    [[nodiscard]] double voltage(Phase ph, double t) const {
        const double base = omega * t + theta_g0 - static_cast<int>(ph) * two_pi_over_3;
        double v = amplitude * std::sin(base);
        for (const auto& h : harmonics) {
            v += h.amplitude * std::sin(h.order * base + h.phase);
        }
        return v;
    }

    [[nodiscard]] Abc voltages(double t) const {
        return {voltage(Phase::a, t), voltage(Phase::b, t), voltage(Phase::c, t)};
    }
};

// =============================================================================
// Carrier and deadtime
// =============================================================================

struct GateSegment {
    double begin = 0.0;
    double end = 0.0;
    LegGate gate = LegGate::bottom_on;
};

/// Per-leg modulator memory carried across carrier periods.
struct LegModulator {
    bool commanded_high = false;
    double blank_until = -std::numeric_limits<double>::infinity();  // relative to period start
};

using ModulatorState = std::array<LegModulator, 3>;

/// Gate segments of one carrier period [0, t_sw). The carrier is the symmetric
/// triangle |2 tau / t_sw - 1| (peaks at the period edges, where the current
/// is sampled); the top switch is commanded on while duty exceeds it. Each
/// commanded transition blanks both switches for `t_deadtime`.
[[nodiscard]] inline std::vector<GateSegment> carrier_segments(double duty, double t_sw,
                                                               double t_deadtime,
                                                               LegModulator& mod) {
    duty = std::clamp(duty, 0.0, 1.0);
    const bool always_high = duty >= 1.0;
    const bool pulse = duty > 0.0 && duty < 1.0;
    const double rise = 0.5 * t_sw * (1.0 - duty);
    const double fall = 0.5 * t_sw * (1.0 + duty);

    std::vector<double> changes;
    const bool start_high = always_high;
    if (start_high != mod.commanded_high) {
        changes.push_back(0.0);
    }
    if (pulse) {
        changes.push_back(rise);
        changes.push_back(fall);
    }

    auto commanded = [&](double tau) {
        if (always_high) return true;
        if (!pulse) return false;
        return tau >= rise && tau < fall;
    };
    auto blanked = [&](double tau) {
        if (tau < mod.blank_until) return true;
        for (double c : changes) {
            if (tau >= c && tau < c + t_deadtime) return true;
        }
        return false;
    };

    std::vector<double> cuts{0.0, t_sw};
    if (mod.blank_until > 0.0 && mod.blank_until < t_sw) cuts.push_back(mod.blank_until);
    for (double c : changes) {
        cuts.push_back(c);
        if (c + t_deadtime < t_sw) cuts.push_back(c + t_deadtime);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::vector<GateSegment> segs;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double a = cuts[k];
        const double b = cuts[k + 1];
        if (!(b > a)) continue;
        const double mid = 0.5 * (a + b);
        LegGate g = blanked(mid) ? LegGate::blanking
                                 : (commanded(mid) ? LegGate::top_on : LegGate::bottom_on);
        if (!segs.empty() && segs.back().gate == g) {
            segs.back().end = b;
        } else {
            segs.push_back({a, b, g});
        }
    }

    double carry = mod.blank_until;
    for (double c : changes) carry = std::max(carry, c + t_deadtime);
    mod.blank_until = carry - t_sw;
    mod.commanded_high = always_high;
    return segs;
}

// =============================================================================
// Plant
// =============================================================================

/// RL filter plus grid driven by the bridge. The RL branch is advanced by the
/// exact solution for a constant bridge voltage and sinusoidal grid voltages.
class Plant {
public:
    Plant(const SystemParams& p, const DeviceHealth& health, GridModel grid)
        : params_(p),
          grid_(std::move(grid)),
          r_(p.r_l + p.r_s),
          l_(p.l_g + p.l_s) {
        for (int k = 0; k < 3; ++k) {
            legs_[k] = leg_devices(health, static_cast<Phase>(k));
        }
        build_grid_terms();
    }

    Plant(const SystemParams& p, const DeviceHealth& health)
        : Plant(p, health, GridModel::from(p)) {}

    [[nodiscard]] const SystemParams& params() const { return params_; }
    [[nodiscard]] const GridModel& grid() const { return grid_; }
    [[nodiscard]] const LegDevices& leg(Phase ph) const { return legs_[static_cast<int>(ph)]; }

    /// Duty-weighted pole voltages; conduction selected by the present current sign.
    [[nodiscard]] Abc pole_voltages_averaged(const Abc& i, const Abc& duty) const {
        Abc v{};
        for (int k = 0; k < 3; ++k) {
            const auto ph = static_cast<Phase>(k);
            const double hi = leg_output_voltage(LegGate::top_on, i[k], legs_[k], params_.v_dc, ph).voltage;
            const double lo = leg_output_voltage(LegGate::bottom_on, i[k], legs_[k], params_.v_dc, ph).voltage;
            v[k] = duty[k] * hi + (1.0 - duty[k]) * lo;
        }
        return v;
    }

    /// Phase-to-neutral voltages of a three-wire system: the common mode of
    /// the poles has no path.
    [[nodiscard]] static Abc phase_voltages(const Abc& pole) {
        const double cm = (pole[0] + pole[1] + pole[2]) / 3.0;
        return {pole[0] - cm, pole[1] - cm, pole[2] - cm};
    }

    /// Exact RL update over `h` with constant phase voltages `v_an`.
    [[nodiscard]] PlantState advance(const PlantState& s, const Abc& v_an, double h) const {
        return advance(s, v_an, h, std::exp(-h * r_ / l_));
    }

    /// Averaged-fidelity step over `dt` (one control period).
    [[nodiscard]] PlantState step_averaged(const PlantState& s, const Abc& duty, double dt) const {
        return advance(s, phase_voltages(pole_voltages_averaged(s.i, duty)), dt);
    }

    /// Switched-fidelity step over one carrier period split into `n_over`
    /// micro-steps. Gate edges inside a micro-step are resolved exactly; the
    /// current sign is sampled at the start of each micro-step.
    [[nodiscard]] PlantState step_switched(const PlantState& s, ModulatorState& mod,
                                           const Abc& duty, int n_over) const {
        const double t_sw = params_.t_sw();
        const double h = t_sw / n_over;
        const double decay = std::exp(-h * r_ / l_);
        std::array<std::vector<GateSegment>, 3> segs;
        std::array<std::size_t, 3> cursor{};
        for (int k = 0; k < 3; ++k) {
            segs[k] = carrier_segments(duty[k], t_sw, params_.t_deadtime, mod[k]);
        }

        PlantState cur = s;
        const double t0 = s.t;
        for (int m = 0; m < n_over; ++m) {
            const double a = m * h;
            const double b = (m + 1 == n_over) ? t_sw : (m + 1) * h;
            Abc pole{};
            for (int k = 0; k < 3; ++k) {
                const auto ph = static_cast<Phase>(k);
                std::array<double, 3> occ{};  // top_on, bottom_on, blanking
                auto& c = cursor[k];
                while (c < segs[k].size() && segs[k][c].end <= a) ++c;
                for (std::size_t j = c; j < segs[k].size() && segs[k][j].begin < b; ++j) {
                    const double overlap = std::min(b, segs[k][j].end) - std::max(a, segs[k][j].begin);
                    if (overlap > 0.0) occ[static_cast<int>(segs[k][j].gate)] += overlap;
                }
                double acc = 0.0;
                for (int g = 0; g < 3; ++g) {
                    if (occ[g] > 0.0) {
                        acc += occ[g] * leg_output_voltage(static_cast<LegGate>(g), cur.i[k],
                                                           legs_[k], params_.v_dc, ph)
                                            .voltage;
                    }
                }
                pole[k] = acc / (b - a);
            }
            cur = advance(cur, phase_voltages(pole), b - a, decay);
            cur.t = t0 + b;
        }
        return cur;
    }

private:
    struct GridTerm {
        double omega = 0.0;
        std::array<std::complex<double>, 3> coeff{};  // particular current: Re{coeff e^{j omega t}}
    };

    void build_grid_terms() {
        auto add = [&](double omega, std::array<std::complex<double>, 3> u) {
            // zero-sequence grid voltage drives no current in a three-wire system
            const std::complex<double> mean = (u[0] + u[1] + u[2]) / 3.0;
            const std::complex<double> z{r_, omega * l_};
            GridTerm t;
            t.omega = omega;
            for (int k = 0; k < 3; ++k) t.coeff[k] = -(u[k] - mean) / z;
            terms_.push_back(t);
        };
        auto phasors = [&](double amp, int order, double phase) {
            std::array<std::complex<double>, 3> u{};
            for (int k = 0; k < 3; ++k) {
                const double alpha = order * (grid_.theta_g0 - k * two_pi_over_3) + phase;
                u[k] = std::polar(amp, alpha - 0.5 * std::numbers::pi);
            }
            return u;
        };
        add(grid_.omega, phasors(grid_.amplitude, 1, 0.0));
        for (const auto& hm : grid_.harmonics) {
            if (hm.order < 1) throw ConfigError("grid harmonic order must be >= 1");
            add(hm.order * grid_.omega, phasors(hm.amplitude, hm.order, hm.phase));
        }
    }

    [[nodiscard]] double particular(int k, double t) const {
        double i = 0.0;
        for (const auto& term : terms_) {
            i += std::real(term.coeff[k] * std::polar(1.0, term.omega * t));
        }
        return i;
    }

    [[nodiscard]] PlantState advance(const PlantState& s, const Abc& v_an, double h,
                                     double decay) const {
        PlantState out;
        out.t = s.t + h;
        for (int k = 0; k < 3; ++k) {
            const double dc = v_an[k] / r_;
            out.i[k] = particular(k, out.t) + dc + decay * (s.i[k] - particular(k, s.t) - dc);
        }
        return out;
    }

    SystemParams params_;
    GridModel grid_;
    double r_;
    double l_;
    std::array<LegDevices, 3> legs_{};
    std::vector<GridTerm> terms_;
};

/// Micro-steps per carrier period for a requested micro-step length.
[[nodiscard]] inline int micro_steps_for(const SystemParams& p, double dt_micro) {
    const double n = p.t_sw() / dt_micro;
    if (!(dt_micro > 0.0) || std::abs(n - std::round(n)) > 1e-9 * n || std::round(n) < 1.0) {
        throw ConfigError("micro-step does not divide the carrier period");
    }
    return static_cast<int>(std::lround(n));
}

}  // namespace vonmon
