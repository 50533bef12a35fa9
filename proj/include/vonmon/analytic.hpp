#pragma once

// Closed-loop response of the current loop to a bridge voltage error, the
// on-state resistance error waveform, and the harmonics it is expected to
// leave in the controller's reference voltages.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vonmon/control.hpp"
#include "vonmon/params.hpp"
#include "vonmon/spectrum.hpp"

namespace vonmon {

// =============================================================================
// Loop response
// =============================================================================

struct LoopResponse {
    double freq = 0.0;
    double gain = 0.0;
    double phase = 0.0;  // radians
};

/// Transfer from a bridge voltage error to the dq reference voltage:
///
///   G = Gpi Gf Gadc / (1 + Gpwm Gpi Gf Gadc)
///
/// with Gpi = Kpc + Kic/s, Gf = 1/(s Lg + RL), Gadc = 1/(0.5 Tsa s + 1) and
/// Gpwm = 1/(0.25 Tsa s + 1). The integral action makes G(0) = 1.
[[nodiscard]] inline std::complex<double> closed_loop_gain(const SystemParams& p, double f) {
    if (f < 0.0) throw std::invalid_argument("closed_loop_gain: negative frequency");
    if (f == 0.0) return {1.0, 0.0};
    const std::complex<double> s{0.0, 2.0 * std::numbers::pi * f};
    const auto pi = p.k_pc + p.k_ic / s;
    const auto filter = 1.0 / (s * p.l_g + p.r_l);
    const auto adc = 1.0 / (0.5 * p.t_sa() * s + 1.0);
    const auto pwm = 1.0 / (0.25 * p.t_sa() * s + 1.0);
    const auto fwd = pi * filter * adc;
    return fwd / (1.0 + pwm * fwd);
}

[[nodiscard]] inline LoopResponse loop_response(const SystemParams& p, double f) {
    const auto g = closed_loop_gain(p, f);
    return {f, std::abs(g), std::arg(g)};
}

/// Part of the error the loop leaves uncompensated at a harmonic order, in
/// percent: |1 - G(j k w)|.
[[nodiscard]] inline double suppression_error(const SystemParams& p, int order) {
    if (order < 0) throw std::invalid_argument("suppression_error: negative order");
    return 100.0 * std::abs(1.0 - closed_loop_gain(p, order * p.f_g));
}

// =============================================================================
// Error waveform
// =============================================================================

/// Voltage error that a resistance increase `delta_r_on` on `device` adds to
/// its phase, expressed as the compensation the controller has to add:
/// delta_r_on * i(t) while the device conducts, weighted by its share of the
/// switching period. For S1 this is
///
///   dR * I sin(wt + theta_g0) * [i > 0] * (1/2 + m/2 sin(wt + theta_g0)).
[[nodiscard]] inline double error_waveform(double t, double delta_r_on, const OperatingPoint& op,
                                           double theta_g0, DeviceId device = DeviceId::S1) {
    const Phase ph = phase_of(device);
    const double angle = op.omega * t + theta_g0 - static_cast<int>(ph) * two_pi_over_3;
    const double s = std::sin(angle);
    const double i = op.i_a_amp * s;
    const double duty_top = 0.5 + 0.5 * op.m_d * s;
    const bool top = position_of(device) == LegPosition::top;
    const bool igbt = kind_of(device) == DeviceKind::igbt;
    // top IGBT and bottom diode carry positive current, the others negative
    const bool conducts = (top == igbt) ? (i > 0.0) : (i < 0.0);
    if (!conducts) return 0.0;
    return delta_r_on * i * (top ? duty_top : 1.0 - duty_top);
}

/// Error vector across the three phases; only the degraded device's phase is
/// non-zero.
[[nodiscard]] inline Abc error_vector(double t, double delta_r_on, const OperatingPoint& op,
                                      double theta_g0, DeviceId device = DeviceId::S1) {
    Abc v{};
    v[static_cast<int>(phase_of(device))] = error_waveform(t, delta_r_on, op, theta_g0, device);
    return v;
}

/// S1 error with the current-sign indicator replaced by its Fourier series
/// truncated after `terms` odd harmonics. Converges to `error_waveform`.
[[nodiscard]] inline double error_waveform_series(double t, double delta_r_on,
                                                  const OperatingPoint& op, double theta_g0,
                                                  int terms) {
    const double angle = op.omega * t + theta_g0;
    double sign_pos = 0.5;
    for (int k = 1; k <= terms; ++k) {
        const int n = 2 * k - 1;
        sign_pos += (2.0 / std::numbers::pi) * std::sin(n * angle) / n;
    }
    return delta_r_on * op.i_a_amp * std::sin(angle) * sign_pos *
           (0.5 + 0.5 * op.m_d * std::sin(angle));
}

// =============================================================================
// Error spectra
// =============================================================================

inline constexpr int default_dense_samples = 8192;

namespace detail {

/// Samples `fn(t, theta)` over one fundamental period on a uniform grid of the
/// dq angle.
template <class Fn>
void sample_period(const OperatingPoint& op, double theta_g0, int n, std::vector<double>& theta,
                   Fn&& fn) {
    theta.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double th = 2.0 * std::numbers::pi * i / n;
        theta[static_cast<std::size_t>(i)] = th;
        const double t = (th - theta_g0 + 0.5 * std::numbers::pi) / op.omega;
        fn(static_cast<std::size_t>(i), t, th);
    }
}

}  // namespace detail

/// Spectrum of the bridge error in the degraded device's own phase.
[[nodiscard]] inline Spectrum error_spectrum_abc(double delta_r_on, const OperatingPoint& op,
                                                 double theta_g0, int k_max,
                                                 DeviceId device = DeviceId::S1,
                                                 int samples = default_dense_samples) {
    if (k_max < 0) throw std::invalid_argument("error_spectrum_abc: k_max < 0");
    std::vector<double> theta;
    std::vector<double> x(static_cast<std::size_t>(samples));
    detail::sample_period(op, theta_g0, samples, theta, [&](std::size_t i, double t, double) {
        x[i] = error_waveform(t, delta_r_on, op, theta_g0, device);
    });
    const auto orders = order_range(0, k_max);
    return Spectrum{Channel::v_an_err, sync_dft(x, theta, orders)};
}

struct DqSpectra {
    Spectrum d;
    Spectrum q;
    Spectrum zero;
};

/// dq0 spectra of the bridge error, from dense sampling of the error waveform
/// through the Park transform.
[[nodiscard]] inline DqSpectra error_spectrum_dq(double delta_r_on, const OperatingPoint& op,
                                                 double theta_g0, int k_max,
                                                 DeviceId device = DeviceId::S1,
                                                 int samples = default_dense_samples) {
    if (k_max < 0) throw std::invalid_argument("error_spectrum_dq: k_max < 0");
    std::vector<double> theta;
    std::vector<double> d(static_cast<std::size_t>(samples));
    std::vector<double> q(d.size());
    std::vector<double> z(d.size());
    detail::sample_period(op, theta_g0, samples, theta, [&](std::size_t i, double t, double th) {
        const Dq0 v = park(th, error_vector(t, delta_r_on, op, theta_g0, device));
        d[i] = v.d;
        q[i] = v.q;
        z[i] = v.zero;
    });
    const auto orders = order_range(0, k_max);
    return DqSpectra{
        Spectrum{Channel::v_d_err, sync_dft(d, theta, orders)},
        Spectrum{Channel::v_q_err, sync_dft(q, theta, orders)},
        Spectrum{Channel::v_0_err, sync_dft(z, theta, orders)},
    };
}

// =============================================================================
// Predicted reference-voltage harmonics
// =============================================================================

enum class PredictionMode { ideal, loop_corrected };

[[nodiscard]] inline std::string_view to_string(PredictionMode m) {
    return m == PredictionMode::ideal ? "ideal" : "loop-corrected";
}

[[nodiscard]] inline PredictionMode parse_prediction_mode(std::string_view s) {
    if (s == "ideal") return PredictionMode::ideal;
    if (s == "loop-corrected" || s == "loop_corrected") return PredictionMode::loop_corrected;
    throw ConfigError("unknown prediction mode '" + std::string(s) + "'");
}

struct RefHarmonics {
    Spectrum d;
    Spectrum q;
    Spectrum a;
    Spectrum b;
    Spectrum c;

    [[nodiscard]] const Spectrum& phase(Phase p) const {
        switch (p) {
        case Phase::a: return a;
        case Phase::b: return b;
        case Phase::c: return c;
        }
        return a;
    }
};

/// abc-frame spectrum of Re{(d + j q) e^{j(theta - shift)}}, i.e. one row of
/// the inverse Park transform with zero sequence dropped. Multiplying by
/// e^{+-j theta} moves every dq order k to abc orders k -+ 1, so `d` and `q`
/// must hold every order 0..k_out + 1.
[[nodiscard]] inline Spectrum dq_to_phase(const Spectrum& d, const Spectrum& q, double shift,
                                          Channel channel, int k_out) {
    const int kk = std::min(d.k_max(), q.k_max());
    if (kk < k_out + 1) {
        throw std::invalid_argument("dq_to_phase: dq spectra must reach order k_out + 1");
    }
    // two-sided coefficients, index n + offset for n in [-(kk+1), kk+1]
    const int off = kk + 1;
    std::vector<Phasor> w(static_cast<std::size_t>(2 * off + 1), Phasor{});
    const Phasor rot = std::polar(1.0, -shift);
    for (int n = -kk; n <= kk; ++n) {
        const int k = std::abs(n);
        const Phasor dk = d.at(k);
        const Phasor qk = q.at(k);
        Phasor dn;
        Phasor qn;
        if (k == 0) {
            dn = dk.real();
            qn = qk.real();
        } else if (n > 0) {
            dn = 0.5 * dk;
            qn = 0.5 * qk;
        } else {
            dn = 0.5 * std::conj(dk);
            qn = 0.5 * std::conj(qk);
        }
        const Phasor zn = dn + Phasor{0.0, 1.0} * qn;
        w[static_cast<std::size_t>(n + 1 + off)] = zn * rot;
    }
    Spectrum out;
    out.channel = channel;
    for (int k = 0; k <= k_out; ++k) {
        const Phasor r = 0.5 * (w[static_cast<std::size_t>(k + off)] +
                                std::conj(w[static_cast<std::size_t>(-k + off)]));
        out.phasors[k] = k == 0 ? Phasor{r.real(), 0.0} : 2.0 * r;
    }
    return out;
}

/// Harmonics the controller adds to v_d*, v_q* and v_a*, v_b*, v_c* to cancel
/// the on-state error. `ideal` assumes full compensation; `loop_corrected`
/// scales every dq order by the closed-loop response at k * f_g. Zero
/// sequence has no current path and never appears in the references.
[[nodiscard]] inline RefHarmonics predicted_ref_harmonics(double delta_r_on,
                                                          const OperatingPoint& op,
                                                          const SystemParams& p, int k_max,
                                                          PredictionMode mode,
                                                          DeviceId device = DeviceId::S1) {
    if (k_max < 0) throw std::invalid_argument("predicted_ref_harmonics: k_max < 0");
    DqSpectra err = error_spectrum_dq(delta_r_on, op, p.theta_g0, k_max + 1, device);
    if (mode == PredictionMode::loop_corrected) {
        const double f1 = op.omega / (2.0 * std::numbers::pi);
        for (auto* s : {&err.d, &err.q}) {
            for (auto& [k, v] : s->phasors) {
                if (k > 0) v *= closed_loop_gain(p, k * f1);
            }
        }
    }
    RefHarmonics out;
    out.a = dq_to_phase(err.d, err.q, 0.0, Channel::v_a_ref, k_max);
    out.b = dq_to_phase(err.d, err.q, two_pi_over_3, Channel::v_b_ref, k_max);
    out.c = dq_to_phase(err.d, err.q, -two_pi_over_3, Channel::v_c_ref, k_max);
    out.d = err.d;
    out.q = err.q;
    out.d.channel = Channel::v_d_ref;
    out.q.channel = Channel::v_q_ref;
    out.d.phasors.erase(k_max + 1);
    out.q.phasors.erase(k_max + 1);
    return out;
}

// =============================================================================
// Sensitivity table
// =============================================================================

struct SensitivityRow {
    int order = 0;
    double d = 0.0;  // |dv_d*| per ohm of delta R_on
    double q = 0.0;
};

/// Operating point with the phase current normalized to `i_a` amperes and the
/// given modulation index.
[[nodiscard]] inline OperatingPoint normalized_operating_point(const SystemParams& p,
                                                               double i_a = 1.0,
                                                               double m_d = 0.775) {
    return OperatingPoint{i_a, m_d, p.omega()};
}

/// Reference-harmonic magnitudes per ohm of resistance increase. The model is
/// linear in delta R_on, so it is evaluated at 1 ohm.
[[nodiscard]] inline std::vector<SensitivityRow> sensitivity_table(
    const SystemParams& p, const OperatingPoint& op, const std::vector<int>& orders,
    PredictionMode mode = PredictionMode::ideal, DeviceId device = DeviceId::S1) {
    int k_max = 0;
    for (int k : orders) {
        if (k < 0) throw std::invalid_argument("sensitivity_table: negative order");
        k_max = std::max(k_max, k);
    }
    const RefHarmonics h = predicted_ref_harmonics(1.0, op, p, k_max, mode, device);
    std::vector<SensitivityRow> rows;
    rows.reserve(orders.size());
    for (int k : orders) {
        rows.push_back({k, h.d.magnitude(k), h.q.magnitude(k)});
    }
    return rows;
}

}  // namespace vonmon
