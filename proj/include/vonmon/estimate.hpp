#pragma once

// Inversion of measured reference-voltage harmonics into a resistance
// increase, localization of the degraded phase and an end-of-life verdict.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vonmon/analytic.hpp"
#include "vonmon/params.hpp"
#include "vonmon/spectrum.hpp"

namespace vonmon {

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct HealthEstimate {
    double delta_r_on_hat = 0.0;
    std::optional<Phase> phase_hat;
    double eol_fraction = 0.0;  // delta_r_on_hat / (threshold * r_on0)
    double residual = 0.0;      // weighted relative misfit, 0 = exact
    std::vector<int> orders_used;
    bool clamped = false;  // the unconstrained solution was negative
    DeviceId model_device = DeviceId::S1;
};

struct EstimateOptions {
    std::vector<int> orders{0, 1, 2};
    bool use_q_axis = false;
    PredictionMode mode = PredictionMode::loop_corrected;
    DeviceId device = DeviceId::S1;
    double r_on0 = 22.5e-3;
    double eol_threshold = 0.05;
};

/// Weighted least-squares fit of a single scalar dR:
///
///   min sum_k w_k |dV(k) - dR s_k|^2,  w_k = |s_k|^2
///
/// where s_k are the model's complex reference-voltage phasors per ohm at the
/// measured operating point. With one order this is dV(k) / s_k projected on
/// the model direction.
[[nodiscard]] inline HealthEstimate estimate_delta_ron(const Spectrum& dv_d, const Spectrum& dv_q,
                                                       const OperatingPoint& op,
                                                       const SystemParams& p,
                                                       const EstimateOptions& opt = {}) {
    if (!(op.i_a_amp > 0.0)) throw EstimationError("estimate needs a positive phase current");
    if (opt.orders.empty()) throw EstimationError("estimate needs at least one order");
    int k_max = 0;
    for (int k : opt.orders) {
        if (k < 0) throw EstimationError("negative harmonic order");
        if (!dv_d.has(k) || (opt.use_q_axis && !dv_q.has(k))) {
            throw EstimationError("measured spectrum lacks order " + std::to_string(k));
        }
        k_max = std::max(k_max, k);
    }
    const RefHarmonics model = predicted_ref_harmonics(1.0, op, p, k_max, opt.mode, opt.device);

    struct Term {
        Phasor meas;
        Phasor sens;
    };
    std::vector<Term> terms;
    for (int k : opt.orders) {
        terms.push_back({dv_d.at(k), model.d.at(k)});
        if (opt.use_q_axis) terms.push_back({dv_q.at(k), model.q.at(k)});
    }

    double num = 0.0;
    double den = 0.0;
    double meas_energy = 0.0;
    for (const auto& t : terms) {
        const double w = std::norm(t.sens);
        num += w * (std::conj(t.sens) * t.meas).real();
        den += w * std::norm(t.sens);
        meas_energy += w * std::norm(t.meas);
    }
    if (!(den > 0.0)) {
        throw EstimationError("model sensitivities vanish at the selected orders");
    }

    HealthEstimate est;
    est.orders_used = opt.orders;
    est.model_device = opt.device;
    double x = num / den;
    if (x < 0.0) {
        est.clamped = true;
        x = 0.0;
    }
    est.delta_r_on_hat = x;
    if (meas_energy > 0.0) {
        double miss = 0.0;
        for (const auto& t : terms) miss += std::norm(t.sens) * std::norm(t.meas - x * t.sens);
        est.residual = std::sqrt(miss / meas_energy);
    }
    est.eol_fraction = x / (opt.eol_threshold * opt.r_on0);
    return est;
}

// =============================================================================
// Phase localization
// =============================================================================

struct PhaseLocation {
    std::optional<Phase> phase;
    double confidence = 0.0;
    std::array<double, 3> correlation{};  // normalized, per candidate phase
};

struct LocateOptions {
    std::vector<int> orders{0, 1};
    double noise_floor = 10e-6;  // volts
};

/// Matches the abc reference-harmonic deltas against the single-phase
/// signatures (2,-1,-1), (-1,2,-1), (-1,-1,2). The correlation of a candidate
/// is |<p, z>| / (|p| |z|) accumulated over the orders, which is invariant to
/// a common complex factor. An exact signature scores 1 against itself and
/// 1/2 against the other two, so confidence = 2 (best - second).
[[nodiscard]] inline PhaseLocation locate_phase(const Spectrum& dv_a, const Spectrum& dv_b,
                                                const Spectrum& dv_c,
                                                const LocateOptions& opt = {}) {
    PhaseLocation loc;
    double z_energy = 0.0;
    double peak = 0.0;
    std::array<double, 3> proj{};
    for (int k : opt.orders) {
        const std::array<Phasor, 3> z{dv_a.at(k), dv_b.at(k), dv_c.at(k)};
        for (const auto& v : z) {
            z_energy += std::norm(v);
            peak = std::max(peak, std::abs(v));
        }
        for (int cand = 0; cand < 3; ++cand) {
            Phasor dot{};
            for (int j = 0; j < 3; ++j) dot += (j == cand ? 2.0 : -1.0) * z[j];
            proj[cand] += std::norm(dot);
        }
    }
    if (peak < opt.noise_floor || !(z_energy > 0.0)) return loc;

    for (int cand = 0; cand < 3; ++cand) {
        loc.correlation[cand] = std::sqrt(proj[cand] / (6.0 * z_energy));
    }
    std::array<int, 3> rank{0, 1, 2};
    std::sort(rank.begin(), rank.end(),
              [&](int x, int y) { return loc.correlation[x] > loc.correlation[y]; });
    loc.phase = static_cast<Phase>(rank[0]);
    loc.confidence =
        std::clamp(2.0 * (loc.correlation[rank[0]] - loc.correlation[rank[1]]), 0.0, 1.0);
    return loc;
}

// =============================================================================
// End-of-life report
// =============================================================================

enum class HealthStatus { healthy, watch, end_of_life };

[[nodiscard]] inline std::string_view to_string(HealthStatus s) {
    switch (s) {
    case HealthStatus::healthy: return "healthy";
    case HealthStatus::watch: return "watch";
    case HealthStatus::end_of_life: return "end-of-life";
    }
    return "healthy";
}

struct EolReport {
    double delta_r_on = 0.0;
    double r_on0 = 0.0;
    double threshold = 0.05;
    double eol_fraction = 0.0;
    HealthStatus status = HealthStatus::healthy;
    std::optional<Phase> phase;
};

/// Fraction of the end-of-life resistance increase (threshold * r_on0)
/// consumed: below 0.5 healthy, below 1 watch, otherwise end-of-life.
[[nodiscard]] inline EolReport eol_report(double delta_r_on, double r_on0,
                                          double threshold = 0.05,
                                          std::optional<Phase> phase = std::nullopt) {
    if (!(r_on0 > 0.0)) throw EstimationError("eol_report needs r_on0 > 0");
    if (!(threshold > 0.0)) throw EstimationError("eol_report needs a positive threshold");
    EolReport r;
    r.delta_r_on = delta_r_on;
    r.r_on0 = r_on0;
    r.threshold = threshold;
    r.phase = phase;
    r.eol_fraction = delta_r_on / (threshold * r_on0);
    // a relative slack of a few ulps keeps 5 % of R_on0 itself at end-of-life
    constexpr double slack = 1e-12;
    if (r.eol_fraction >= 1.0 - slack) {
        r.status = HealthStatus::end_of_life;
    } else if (r.eol_fraction >= 0.5 - slack) {
        r.status = HealthStatus::watch;
    }
    return r;
}

[[nodiscard]] inline EolReport eol_report(const HealthEstimate& est, const DeviceHealth& health0,
                                          DeviceId reference = DeviceId::S1,
                                          double threshold = 0.05) {
    return eol_report(est.delta_r_on_hat, health0.at(reference).r_on, threshold, est.phase_hat);
}

}  // namespace vonmon
